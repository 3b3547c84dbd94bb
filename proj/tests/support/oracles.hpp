#pragma once

// Independent reference implementations used by the tests: direct loops,
// pair counting and central differences, all in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "dists/tensor.hpp"

namespace oracle {

using dists::Tensor3;

template <class T = double>
Tensor3<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor3<T> t(c, h, w);
  for (T& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <class T = double>
dists::ConvSpec<T> random_conv(int in, int out, int k, std::uint64_t seed, int stride = 1, int padding = -1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(in * k * k));
  dists::ConvSpec<T> s{in, out, k, stride, padding < 0 ? (k - 1) / 2 : padding, {}, {}};
  s.weights.resize(s.weight_count());
  for (T& v : s.weights) v = static_cast<T>(n(rng));
  s.bias.resize(out);
  for (T& v : s.bias) v = static_cast<T>(0.1 * n(rng));
  return s;
}

/// 0.5 (1 - cos(2 pi n / (N - 1))), outer product, divided by its sum.
inline std::vector<double> hanning(int size) {
  const double pi = 3.14159265358979323846;
  std::vector<double> w(size), k(static_cast<std::size_t>(size) * size);
  for (int n = 0; n < size; ++n) w[n] = 0.5 - 0.5 * std::cos(2 * pi * n / (size - 1));
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) k[i * size + j] = w[i] * w[j] / (s * s);
  return k;
}

/// Four nested loops over output position, output channel, input channel and taps.
template <class T>
Tensor3<double> conv(const Tensor3<T>& in, const dists::ConvSpec<T>& s) {
  const int k = s.kernel_size;
  const int oh = (in.height() + 2 * s.padding - k) / s.stride + 1;
  const int ow = (in.width() + 2 * s.padding - k) / s.stride + 1;
  Tensor3<double> out(s.out_channels, oh, ow);
  for (int o = 0; o < s.out_channels; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = s.bias[o];
        for (int c = 0; c < s.in_channels; ++c)
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int iy = y * s.stride + u - s.padding, ix = x * s.stride + v - s.padding;
              if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
              acc += static_cast<double>(s.weights[((o * s.in_channels + c) * k + u) * k + v]) * in(c, iy, ix);
            }
        out(o, y, x) = acc;
      }
  return out;
}

/// sqrt(eps + sum_uv g[u,v] x^2) at every stride-th position, zero padded.
template <class T>
Tensor3<double> l2pool(const Tensor3<T>& in, int size, int stride, double eps) {
  const auto g = hanning(size);
  const int pad = (size - 1) / 2;
  const int oh = (in.height() + 2 * pad - size) / stride + 1;
  const int ow = (in.width() + 2 * pad - size) / stride + 1;
  Tensor3<double> out(in.channels(), oh, ow);
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = eps;
        for (int u = 0; u < size; ++u)
          for (int v = 0; v < size; ++v) {
            const int iy = y * stride + u - pad, ix = x * stride + v - pad;
            if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
            const double val = in(c, iy, ix);
            acc += g[u * size + v] * val * val;
          }
        out(c, y, x) = std::sqrt(acc);
      }
  return out;
}

/// Central difference (f(x + h e_i) - f(x - h e_i)) / 2h at coordinate i.
inline double central_difference(const std::function<double(const Tensor3<double>&)>& f, Tensor3<double> x,
                                 std::size_t i, double h = 1e-3) {
  const double x0 = x.values()[i];
  x.values()[i] = x0 + h;
  const double fp = f(x);
  x.values()[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2 * h);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-10) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0;
  int skipped = 0;
};

/// Compares `grad` to central differences of `f` at `count` random coordinates.
inline GradCheck check_gradient(const std::function<double(const Tensor3<double>&)>& f, const Tensor3<double>& x,
                                const Tensor3<double>& grad, int count, std::uint64_t seed, double tol = 1e-3,
                                double h = 1e-3, double floor = 1e-10) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  GradCheck r;
  for (int k = 0; k < count; ++k) {
    const std::size_t i = pick(rng);
    const double err = relative_error(grad.values()[i], central_difference(f, x, i, h), floor);
    r.worst = std::max(r.worst, err);
    ++r.checked;
    if (err > tol) ++r.failed;
  }
  return r;
}

/// As check_gradient, but a coordinate is redrawn when `smooth(x, i, h)` says
/// f is not differentiable on [x_i - h, x_i + h].
inline GradCheck check_gradient_smooth(const std::function<double(const Tensor3<double>&)>& f,
                                       const Tensor3<double>& x, const Tensor3<double>& grad, int count,
                                       std::uint64_t seed,
                                       const std::function<bool(const Tensor3<double>&, std::size_t, double)>& smooth,
                                       double tol = 1e-3, double h = 1e-3, double floor = 1e-10) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  GradCheck r;
  for (int draws = 0; r.checked < count && draws < 20 * count; ++draws) {
    const std::size_t i = pick(rng);
    if (!smooth(x, i, h)) {
      ++r.skipped;
      continue;
    }
    const double err = relative_error(grad.values()[i], central_difference(f, x, i, h), floor);
    r.worst = std::max(r.worst, err);
    ++r.checked;
    if (err > tol) ++r.failed;
  }
  return r;
}

/// Ranks with ties averaged, by counting smaller and equal elements.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) less += w < v[i], equal += w == v[i];
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double srcc(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

/// Kendall tau-b from all n(n-1)/2 pairs.
inline double krcc(const std::vector<double>& a, const std::vector<double>& b) {
  long long concordant = 0, discordant = 0, tie_a = 0, tie_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) {
        ++tie_a, ++tie_b;
      } else if (da == 0) {
        ++tie_a;
      } else if (db == 0) {
        ++tie_b;
      } else if ((da > 0) == (db > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const long long n0 = static_cast<long long>(a.size()) * (static_cast<long long>(a.size()) - 1) / 2;
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(n0 - tie_a) * static_cast<double>(n0 - tie_b));
}

/// Two-pass population moments.
struct Moments {
  double mean_x, mean_y, var_x, var_y, cov;
};

template <class T>
Moments moments(std::span<T> x, std::span<T> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double vx = 0, vy = 0, c = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    c += (x[i] - mx) * (y[i] - my);
  }
  return {mx, my, vx / n, vy / n, c / n};
}

}  // namespace oracle
