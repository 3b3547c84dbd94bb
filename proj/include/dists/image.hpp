#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "dists/tensor.hpp"

namespace dists {

/// Planar RGB raster with values in [0, 1].
template <class T = float>
using BasicImage = Tensor3<T>;
using Image = BasicImage<float>;

template <class T>
void require_rgb(const Tensor3<T>& im, const char* who) {
  if (im.channels() != 3)
    throw ShapeError(std::string(who) + ": expected a 3-channel image, got " +
                                std::to_string(im.channels()) + " channels");
}

template <class T>
void require_same_shape(const Tensor3<T>& a, const Tensor3<T>& b, const char* who) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(who) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

template <class T>
void clamp_unit(Tensor3<T>& im) {
  for (T& v : im.values()) v = std::clamp(v, T{0}, T{1});
}

/// Bilinear resampling with half-pixel centers and edge clamping (no antialiasing).
template <class T>
Tensor3<T> resize_bilinear(const Tensor3<T>& in, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize target must be positive");
  if (out_h == in.height() && out_w == in.width()) return in;
  Tensor3<T> out(in.channels(), out_h, out_w);
  const double sy = static_cast<double>(in.height()) / out_h;
  const double sx = static_cast<double>(in.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < in.channels(); ++c) {
        const double top = (1 - wx) * in(c, y0, x0) + wx * in(c, y0, x1);
        const double bot = (1 - wx) * in(c, y1, x0) + wx * in(c, y1, x1);
        out(c, y, x) = static_cast<T>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Output extent that makes the smaller side equal to `min_side`, preserving aspect ratio.
inline std::pair<int, int> min_side_extent(int h, int w, int min_side) {
  if (std::min(h, w) == min_side) return {h, w};
  const double s = static_cast<double>(min_side) / std::min(h, w);
  if (h <= w) return {min_side, static_cast<int>(std::lround(w * s))};
  return {static_cast<int>(std::lround(h * s)), min_side};
}

/// Rescales so that min(H, W) == min_side; min_side <= 0 disables rescaling.
template <class T>
Tensor3<T> rescale_min_side(const Tensor3<T>& im, int min_side = 256) {
  if (min_side <= 0) return im;
  auto [h, w] = min_side_extent(im.height(), im.width(), min_side);
  return resize_bilinear(im, h, w);
}

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// BT.601 luma of an RGB image as a single-channel tensor.
template <class T>
Tensor3<double> luminance(const Tensor3<T>& im) {
  require_rgb(im, "luminance");
  Tensor3<double> y(1, im.height(), im.width());
  auto r = im.channel(0), g = im.channel(1), b = im.channel(2);
  auto out = y.channel(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  return y;
}

}  // namespace dists
