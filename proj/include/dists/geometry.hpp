#pragma once

// Mild geometric transforms used to probe invariance: horizontal shift,
// clockwise rotation, dilation about the image center, and their composition.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "dists/image.hpp"

namespace dists::eval {

enum class TransformKind { shift, rotate, dilate, combined };

inline constexpr std::array<TransformKind, 4> kAllTransforms = {TransformKind::shift, TransformKind::rotate,
                                                                  TransformKind::dilate, TransformKind::combined};

inline std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::shift: return "shift";
    case TransformKind::rotate: return "rotate";
    case TransformKind::dilate: return "dilate";
    case TransformKind::combined: return "mixed";
  }
  return "?";
}

inline TransformKind parse_transform_kind(const std::string& s) {
  if (s == "shift") return TransformKind::shift;
  if (s == "rotate") return TransformKind::rotate;
  if (s == "dilate") return TransformKind::dilate;
  if (s == "mixed" || s == "combined") return TransformKind::combined;
  throw std::invalid_argument("unknown transform kind '" + s + "'");
}

/// Defaults are 5% horizontal shift, 3 degrees clockwise, dilation by 1.05.
struct WarpParams {
  double shift_fraction = 0.05;   // of the image width, to the right; |.| <= 0.5
  double rotation_degrees = 3.0;  // clockwise on screen; |.| <= 45
  double dilation = 1.05;         // in [0.5, 2]

  void validate() const {
    if (!(std::abs(shift_fraction) <= 0.5) || !(std::abs(rotation_degrees) <= 45.0) ||
        !(dilation >= 0.5 && dilation <= 2.0))
      throw std::invalid_argument("geometric transform magnitude out of range");
  }
};

/// Forward map in pixel coordinates (x right, y down) as a 3x3 homogeneous
/// matrix. The combined transform applies dilation, then rotation, then the
/// shift, all about the image center.
inline Eigen::Matrix3d warp_matrix(TransformKind kind, const WarpParams& p, int height, int width) {
  p.validate();
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  Eigen::Matrix3d to_center = Eigen::Matrix3d::Identity(), from_center = Eigen::Matrix3d::Identity();
  to_center(0, 2) = -cx, to_center(1, 2) = -cy;
  from_center(0, 2) = cx, from_center(1, 2) = cy;

  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = p.shift_fraction * width;
  const double th = p.rotation_degrees * std::numbers::pi / 180.0;
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  rot(0, 0) = std::cos(th), rot(0, 1) = -std::sin(th);
  rot(1, 0) = std::sin(th), rot(1, 1) = std::cos(th);
  Eigen::Matrix3d dil = Eigen::Matrix3d::Identity();
  dil(0, 0) = dil(1, 1) = p.dilation;

  Eigen::Matrix3d m;
  switch (kind) {
    case TransformKind::shift: m = shift; break;
    case TransformKind::rotate: m = rot; break;
    case TransformKind::dilate: m = dil; break;
    case TransformKind::combined: m = shift * rot * dil; break;
  }
  return from_center * m * to_center;
}

/// Inverse-mapped bilinear warp; samples outside the frame replicate the edge.
template <class T>
Tensor3<T> warp(const Tensor3<T>& in, const Eigen::Matrix3d& forward) {
  const Eigen::Matrix3d inv = forward.inverse();
  Tensor3<T> out(in.channels(), in.height(), in.width());
  const int h = in.height(), w = in.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d s = inv * Eigen::Vector3d(x, y, 1.0);
      const double sx = std::clamp(s.x() / s.z(), 0.0, w - 1.0);
      const double sy = std::clamp(s.y() / s.z(), 0.0, h - 1.0);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < in.channels(); ++c) {
        const double top = (1 - fx) * in(c, y0, x0) + fx * in(c, y0, x1);
        const double bot = (1 - fx) * in(c, y1, x0) + fx * in(c, y1, x1);
        out(c, y, x) = static_cast<T>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

template <class T>
Tensor3<T> geometric_transform(const Tensor3<T>& image, TransformKind kind, const WarpParams& params = {}) {
  return warp(image, warp_matrix(kind, params, image.height(), image.width()));
}

}  // namespace dists::eval
