#pragma once

// Dense channel-major tensors and the forward/adjoint kernels of the
// feature network: cross-correlation, rectification, weighted l2 pooling,
// 2x2 max pooling (ablation only) and per-channel affine maps.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dists/errors.hpp"

namespace dists {

template <class T = float>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  Tensor3(int channels, int height, int width, T fill = T{0})
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) throw ShapeError("negative tensor extent");
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int c, int y, int x) { return data_[(c * plane()) + static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int c, int y, int x) const {
    return data_[(c * plane()) + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<T> channel(int c) { return {data_.data() + c * plane(), plane()}; }
  std::span<const T> channel(int c) const { return {data_.data() + c * plane(), plane()}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Tensor3& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  template <class U>
  Tensor3<U> cast() const {
    Tensor3<U> out(channels_, height_, width_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

inline std::string shape_string(int c, int h, int w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

template <class T>
std::string shape_string(const Tensor3<T>& t) {
  return shape_string(t.channels(), t.height(), t.width());
}

template <class T = float>
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 3;
  int stride = 1;
  int padding = 1;
  std::vector<T> weights;  // out x in x k x k
  std::vector<T> bias;     // out

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size;
  }

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0 || stride <= 0 || padding < 0)
      throw ShapeError("conv spec has non-positive extents");
    if (weights.size() != weight_count() || bias.size() != static_cast<std::size_t>(out_channels))
      throw ShapeError("conv spec parameter count does not match its shape");
  }

  template <class U>
  ConvSpec<U> cast() const {
    return {in_channels, out_channels, kernel_size, stride, padding,
            std::vector<U>(weights.begin(), weights.end()), std::vector<U>(bias.begin(), bias.end())};
  }
};

/// Square nonnegative blur kernel with unit sum, applied at `stride`.
template <class T = float>
struct PoolSpec {
  int size = 5;
  int stride = 2;
  std::vector<T> kernel;  // size x size, row-major

  int padding() const { return (size - 1) / 2; }

  template <class U>
  PoolSpec<U> cast() const {
    return {size, stride, std::vector<U>(kernel.begin(), kernel.end())};
  }
};

/// Normalized outer product of the symmetric Hanning window of odd length `size`.
inline std::vector<double> hanning_kernel(int size) {
  if (size < 3 || size % 2 == 0) throw std::invalid_argument("hanning window size must be odd and >= 3");
  std::vector<double> w(size);
  for (int n = 0; n < size; ++n) w[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / (size - 1)));
  double total = 0.0;
  for (double a : w)
    for (double b : w) total += a * b;
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) k[i * size + j] = w[i] * w[j] / total;
  return k;
}

template <class T = float>
PoolSpec<T> hanning_pool(int size = 5, int stride = 2) {
  auto k = hanning_kernel(size);
  return {size, stride, std::vector<T>(k.begin(), k.end())};
}

inline int conv_output_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Unfolds input patches into a (C*k*k) x (Ho*Wo) row-major matrix.
template <class T>
void im2col(const Tensor3<T>& in, const ConvSpec<T>& s, int out_h, int out_w, std::vector<T>& cols) {
  const int k = s.kernel_size;
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  cols.assign(static_cast<std::size_t>(s.in_channels) * k * k * n, T{0});
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= in.height()) continue;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < in.width()) dst[ox] = in(c, iy, ix);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const std::vector<T>& cols, const ConvSpec<T>& s, int out_h, int out_w, Tensor3<T>& grad_in) {
  const int k = s.kernel_size;
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= grad_in.height()) continue;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < grad_in.width()) grad_in(c, iy, ix) += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with zero padding plus per-output-channel bias.
template <class T>
Tensor3<T> conv2d(const Tensor3<T>& in, const ConvSpec<T>& s) {
  if (in.channels() != s.in_channels)
    throw ShapeError("conv2d expects " + std::to_string(s.in_channels) + " input channels, got " +
                     std::to_string(in.channels()));
  const int oh = conv_output_extent(in.height(), s.kernel_size, s.stride, s.padding);
  const int ow = conv_output_extent(in.width(), s.kernel_size, s.stride, s.padding);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d input " + shape_string(in) + " smaller than kernel");

  std::vector<T> cols;
  detail::im2col(in, s, oh, ow, cols);
  const Eigen::Index rows = static_cast<Eigen::Index>(s.in_channels) * s.kernel_size * s.kernel_size;
  const Eigen::Index n = static_cast<Eigen::Index>(oh) * ow;
  Eigen::Map<const detail::RowMatrix<T>> w(s.weights.data(), s.out_channels, rows);
  Eigen::Map<const detail::RowMatrix<T>> x(cols.data(), rows, n);
  Tensor3<T> out(s.out_channels, oh, ow);
  Eigen::Map<detail::RowMatrix<T>> y(out.data(), s.out_channels, n);
  y.noalias() = w * x;
  y.colwise() += Eigen::Map<const detail::ColVector<T>>(s.bias.data(), s.out_channels);
  return out;
}

/// Adjoint of conv2d with respect to its input: the transposed convolution of `grad_out`.
template <class T>
Tensor3<T> conv2d_backward(const Tensor3<T>& grad_out, const ConvSpec<T>& s, int in_h, int in_w) {
  const Eigen::Index rows = static_cast<Eigen::Index>(s.in_channels) * s.kernel_size * s.kernel_size;
  const Eigen::Index n = static_cast<Eigen::Index>(grad_out.height()) * grad_out.width();
  Eigen::Map<const detail::RowMatrix<T>> w(s.weights.data(), s.out_channels, rows);
  Eigen::Map<const detail::RowMatrix<T>> g(grad_out.data(), s.out_channels, n);
  std::vector<T> cols(static_cast<std::size_t>(rows * n));
  Eigen::Map<detail::RowMatrix<T>> dc(cols.data(), rows, n);
  dc.noalias() = w.transpose() * g;
  Tensor3<T> grad_in(s.in_channels, in_h, in_w);
  detail::col2im_add(cols, s, grad_out.height(), grad_out.width(), grad_in);
  return grad_in;
}

template <class T>
Tensor3<T> relu(const Tensor3<T>& in) {
  Tensor3<T> out = in;
  for (T& v : out.values()) v = std::max(v, T{0});
  return out;
}

template <class T>
Tensor3<T> relu_backward(const Tensor3<T>& grad_out, const Tensor3<T>& in) {
  Tensor3<T> g = grad_out;
  auto x = in.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (!(x[i] > T{0})) gv[i] = T{0};
  return g;
}

/// Stabilizer inside the square root of the l2 pool.
inline constexpr double kL2PoolEpsilon = 1e-12;

/// sqrt(eps + g * (x .* x)) sampled on the stride grid, zero padded by (size-1)/2.
template <class T>
Tensor3<T> l2pool(const Tensor3<T>& in, const PoolSpec<T>& p) {
  const int pad = p.padding();
  const int oh = conv_output_extent(in.height(), p.size, p.stride, pad);
  const int ow = conv_output_extent(in.width(), p.size, p.stride, pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("l2pool input " + shape_string(in) + " smaller than window");
  Tensor3<T> out(in.channels(), oh, ow);
  for (int c = 0; c < in.channels(); ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = kL2PoolEpsilon;
        for (int u = 0; u < p.size; ++u) {
          const int iy = oy * p.stride - pad + u;
          if (iy < 0 || iy >= in.height()) continue;
          for (int v = 0; v < p.size; ++v) {
            const int ix = ox * p.stride - pad + v;
            if (ix < 0 || ix >= in.width()) continue;
            const double x = in(c, iy, ix);
            acc += static_cast<double>(p.kernel[u * p.size + v]) * x * x;
          }
        }
        out(c, oy, ox) = static_cast<T>(std::sqrt(acc));
      }
    }
  }
  return out;
}

template <class T>
Tensor3<T> l2pool_backward(const Tensor3<T>& grad_out, const Tensor3<T>& in, const Tensor3<T>& out,
                           const PoolSpec<T>& p) {
  const int pad = p.padding();
  Tensor3<T> grad_in(in.channels(), in.height(), in.width());
  for (int c = 0; c < in.channels(); ++c) {
    for (int oy = 0; oy < out.height(); ++oy) {
      for (int ox = 0; ox < out.width(); ++ox) {
        const T scale = grad_out(c, oy, ox) / out(c, oy, ox);
        if (scale == T{0}) continue;
        for (int u = 0; u < p.size; ++u) {
          const int iy = oy * p.stride - pad + u;
          if (iy < 0 || iy >= in.height()) continue;
          for (int v = 0; v < p.size; ++v) {
            const int ix = ox * p.stride - pad + v;
            if (ix < 0 || ix >= in.width()) continue;
            grad_in(c, iy, ix) += scale * p.kernel[u * p.size + v] * in(c, iy, ix);
          }
        }
      }
    }
  }
  return grad_in;
}

/// Ordinary 2x2 stride-2 max pooling, ceil mode, used by the pooling ablation.
template <class T>
Tensor3<T> max_pool(const Tensor3<T>& in) {
  const int oh = (in.height() + 1) / 2;
  const int ow = (in.width() + 1) / 2;
  Tensor3<T> out(in.channels(), oh, ow);
  for (int c = 0; c < in.channels(); ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T best = in(c, 2 * oy, 2 * ox);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int iy = 2 * oy + dy, ix = 2 * ox + dx;
            if (iy < in.height() && ix < in.width()) best = std::max(best, in(c, iy, ix));
          }
        out(c, oy, ox) = best;
      }
  return out;
}

template <class T>
Tensor3<T> max_pool_backward(const Tensor3<T>& grad_out, const Tensor3<T>& in) {
  Tensor3<T> grad_in(in.channels(), in.height(), in.width());
  for (int c = 0; c < in.channels(); ++c)
    for (int oy = 0; oy < grad_out.height(); ++oy)
      for (int ox = 0; ox < grad_out.width(); ++ox) {
        int by = 2 * oy, bx = 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int iy = 2 * oy + dy, ix = 2 * ox + dx;
            if (iy < in.height() && ix < in.width() && in(c, iy, ix) > in(c, by, bx)) by = iy, bx = ix;
          }
        grad_in(c, by, bx) += grad_out(c, oy, ox);
      }
  return grad_in;
}

/// out[c] = in[c] * scale[c] + shift[c]
template <class T>
Tensor3<T> channel_affine(const Tensor3<T>& in, std::span<const T> scale, std::span<const T> shift) {
  if (scale.size() != static_cast<std::size_t>(in.channels()) || shift.size() != scale.size())
    throw ShapeError("channel_affine coefficient count does not match channels");
  Tensor3<T> out = in;
  for (int c = 0; c < in.channels(); ++c)
    for (T& v : out.channel(c)) v = v * scale[c] + shift[c];
  return out;
}

}  // namespace dists
