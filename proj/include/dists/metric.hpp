#pragma once

// Texture/structure similarities over a pair of feature stacks, the weighted
// distance built from them, and the PSNR / global SSIM baselines.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dists/backbone.hpp"
#include "dists/errors.hpp"
#include "dists/image.hpp"
#include "dists/tape.hpp"

namespace dists {

inline constexpr double kDefaultC1 = 1e-6;
inline constexpr double kDefaultC2 = 1e-6;
inline constexpr double kStage0Floor = 0.02;

/// Global population statistics of one channel pair.
struct ChannelStats {
  double mean_x = 0, mean_y = 0;
  double var_x = 0, var_y = 0;
  double cov = 0;
};

template <class T>
ChannelStats channel_stats(std::span<T> a, std::span<T> b) {
  if (a.size() != b.size()) throw ShapeError("channel_stats: channel sizes differ");
  if (a.empty()) throw ShapeError("channel_stats: empty channel");
  const double n = static_cast<double>(a.size());
  ChannelStats s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s.mean_x += a[i];
    s.mean_y += b[i];
  }
  s.mean_x /= n;
  s.mean_y /= n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a[i] - s.mean_x;
    const double dy = b[i] - s.mean_y;
    s.var_x += dx * dx;
    s.var_y += dy * dy;
    s.cov += dx * dy;
  }
  s.var_x /= n;
  s.var_y /= n;
  s.cov /= n;
  return s;
}

inline double texture_sim(const ChannelStats& s, double c1 = kDefaultC1) {
  return (2 * s.mean_x * s.mean_y + c1) / (s.mean_x * s.mean_x + s.mean_y * s.mean_y + c1);
}

inline double structure_sim(const ChannelStats& s, double c2 = kDefaultC2) {
  return (2 * s.cov + c2) / (s.var_x + s.var_y + c2);
}

/// Per-channel alpha (texture) and beta (structure) weights laid out stage by stage.
class WeightSet {
 public:
  WeightSet() = default;
  WeightSet(std::array<int, kStageCount> stage_channels, std::vector<double> alpha, std::vector<double> beta,
            double c1 = kDefaultC1, double c2 = kDefaultC2)
      : stage_channels_(stage_channels), alpha_(std::move(alpha)), beta_(std::move(beta)), c1_(c1), c2_(c2) {
    const auto n = static_cast<std::size_t>(std::accumulate(stage_channels_.begin(), stage_channels_.end(), 0));
    if (alpha_.size() != n || beta_.size() != n)
      throw ShapeError("weight set has " + std::to_string(alpha_.size()) + "/" + std::to_string(beta_.size()) +
                       " entries for " + std::to_string(n) + " channels");
  }

  /// Equal weight on every alpha and beta entry (sums to one, no floor applied).
  static WeightSet uniform(std::array<int, kStageCount> stage_channels) {
    const auto n = static_cast<std::size_t>(std::accumulate(stage_channels.begin(), stage_channels.end(), 0));
    const double v = 1.0 / (2.0 * static_cast<double>(n));
    return {stage_channels, std::vector<double>(n, v), std::vector<double>(n, v)};
  }

  std::size_t size() const { return alpha_.size(); }
  const std::array<int, kStageCount>& stage_channels() const { return stage_channels_; }
  std::size_t stage0_count() const { return static_cast<std::size_t>(stage_channels_[0]); }

  std::vector<double>& alpha() { return alpha_; }
  std::vector<double>& beta() { return beta_; }
  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& beta() const { return beta_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }

  double total() const {
    return std::accumulate(alpha_.begin(), alpha_.end(), 0.0) + std::accumulate(beta_.begin(), beta_.end(), 0.0);
  }

  /// Nonnegative, stage-0 entries in [floor, 1], sum within `tol` of one.
  bool feasible(double tol = 1e-6, double floor = kStage0Floor) const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (alpha_[i] < 0 || beta_[i] < 0) return false;
      if (i < stage0_count() &&
          (alpha_[i] < floor - 1e-12 || beta_[i] < floor - 1e-12 || alpha_[i] > 1 || beta_[i] > 1))
        return false;
    }
    return std::abs(total() - 1.0) <= tol;
  }

  friend bool operator==(const WeightSet&, const WeightSet&) = default;

 private:
  std::array<int, kStageCount> stage_channels_{};
  std::vector<double> alpha_, beta_;
  double c1_ = kDefaultC1, c2_ = kDefaultC2;
};

/// Per-channel texture (l) and structure (s) similarities, flattened over stages.
struct Similarities {
  std::vector<double> l, s;
  std::size_t size() const { return l.size(); }
};

template <class T>
void require_compatible(const FeatureStack<T>& fx, const FeatureStack<T>& fy) {
  for (int i = 0; i < kStageCount; ++i)
    if (!fx.stages[i].same_shape(fy.stages[i]))
      throw ShapeError("feature stacks differ at stage " + std::to_string(i) + ": " +
                       shape_string(fx.stages[i]) + " vs " + shape_string(fy.stages[i]));
}

template <class T>
Similarities similarities(const FeatureStack<T>& fx, const FeatureStack<T>& fy, double c1 = kDefaultC1,
                          double c2 = kDefaultC2) {
  require_compatible(fx, fy);
  Similarities out;
  const auto n = static_cast<std::size_t>(fx.total_channels());
  out.l.reserve(n);
  out.s.reserve(n);
  for (int i = 0; i < kStageCount; ++i) {
    for (int c = 0; c < fx.stages[i].channels(); ++c) {
      const auto st = channel_stats(fx.stages[i].channel(c), fy.stages[i].channel(c));
      out.l.push_back(texture_sim(st, c1));
      out.s.push_back(structure_sim(st, c2));
    }
  }
  return out;
}

/// D = sum_ij alpha_ij (1 - l_ij) + beta_ij (1 - s_ij).
///
/// Equal to 1 - sum(alpha l + beta s) whenever the weights sum to one, and
/// exactly zero when every l and s is one.
inline double dists(const Similarities& sim, const WeightSet& w) {
  if (sim.size() != w.size())
    throw ShapeError("weight count " + std::to_string(w.size()) + " does not match channel count " +
                     std::to_string(sim.size()));
  double d = 0.0;
  for (std::size_t k = 0; k < sim.size(); ++k)
    d += w.alpha()[k] * (1.0 - sim.l[k]) + w.beta()[k] * (1.0 - sim.s[k]);
  return d;
}

template <class T>
double dists(const FeatureStack<T>& fx, const FeatureStack<T>& fy, const WeightSet& w) {
  if (static_cast<std::size_t>(fx.total_channels()) != w.size())
    throw ShapeError("weight count " + std::to_string(w.size()) + " does not match channel count " +
                     std::to_string(fx.total_channels()));
  return dists(similarities(fx, fy, w.c1(), w.c2()), w);
}

/// sqrt(D): a proper metric for nonnegative features and nonnegative weights.
template <class T>
double dists_metric(const FeatureStack<T>& fx, const FeatureStack<T>& fy, const WeightSet& w) {
  return std::sqrt(std::max(0.0, dists(fx, fy, w)));
}

inline double dists_metric(const Similarities& sim, const WeightSet& w) {
  return std::sqrt(std::max(0.0, dists(sim, w)));
}

/// Records D(x, y) as the tape's output, where `fy` was extracted on `tape`
/// and `fx` is a fixed reference. Returns D.
template <class T>
double add_dists_loss(Tape<T>& tape, const FeatureStack<T>& fx, const FeatureStack<T>& fy, const WeightSet& w) {
  require_compatible(fx, fy);
  if (static_cast<std::size_t>(fy.total_channels()) != w.size()) throw ShapeError("weight/channel count mismatch");
  double d = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < kStageCount; ++i) {
    const auto& xs = fx.stages[i];
    const auto& ys = fy.stages[i];
    if (ys.channels() == 0) continue;
    if (fy.vars[i] < 0) throw std::logic_error("feature stack was not recorded on a tape");
    Tensor3<T> grad(ys.channels(), ys.height(), ys.width());
    const double n = static_cast<double>(ys.plane());
    double d_stage = 0.0;
    for (int c = 0; c < ys.channels(); ++c, ++k) {
      auto xc = xs.channel(c);
      auto yc = ys.channel(c);
      const auto st = channel_stats(xc, yc);
      const double a1 = 2 * st.mean_x * st.mean_y + w.c1();
      const double b1 = st.mean_x * st.mean_x + st.mean_y * st.mean_y + w.c1();
      const double a2 = 2 * st.cov + w.c2();
      const double b2 = st.var_x + st.var_y + w.c2();
      const double l = a1 / b1, s = a2 / b2;
      const double alpha = w.alpha()[k], beta = w.beta()[k];
      d_stage += alpha * (1 - l) + beta * (1 - s);
      // dl/dmu_y, then per-element ds/dy = (2 (x - mu_x) b2 - a2 * 2 (y - mu_y)) / (n b2^2)
      const double dl_dmu = (2 * st.mean_x * b1 - a1 * 2 * st.mean_y) / (b1 * b1);
      const double g_mean = -alpha * dl_dmu / n;
      const double g_x = -beta * 2.0 / (n * b2);
      const double g_y = beta * a2 * 2.0 / (n * b2 * b2);
      auto gc = grad.channel(c);
      for (std::size_t p = 0; p < gc.size(); ++p)
        gc[p] = static_cast<T>(g_mean + g_x * (xc[p] - st.mean_x) + g_y * (yc[p] - st.mean_y));
    }
    tape.add_loss(fy.vars[i], d_stage, std::move(grad));
    d += d_stage;
  }
  return d;
}

template <class T>
double mse(const Tensor3<T>& x, const Tensor3<T>& y) {
  require_same_shape(x, y, "mse");
  double acc = 0.0;
  auto a = x.values();
  auto b = y.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE) for unit-range images; +infinity for identical inputs.
template <class T>
double psnr(const Tensor3<T>& x, const Tensor3<T>& y) {
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable correlation of a single plane.
inline std::vector<double> filter_valid(std::span<const double> in, int h, int w, std::span<const double> g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int u = 0; u < k; ++u) acc += g[u] * in[y * w + x + u];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int u = 0; u < k; ++u) acc += g[u] * tmp[(y + u) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

// Adjoint of filter_valid.
inline std::vector<double> filter_valid_adjoint(std::span<const double> g_out, int h, int w,
                                                std::span<const double> g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int u = 0; u < k; ++u) tmp[(y + u) * ow + x] += g[u] * g_out[y * ow + x];
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int u = 0; u < k; ++u) out[y * w + x + u] += g[u] * tmp[y * ow + x];
  return out;
}

}  // namespace detail

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM on luma, Gaussian window, mean over the valid region.
/// When `grad_y` is given it receives d(SSIM)/dy for the RGB input y.
template <class T>
double ssim_global(const Tensor3<T>& x, const Tensor3<T>& y, Tensor3<T>* grad_y = nullptr, SsimOptions opt = {}) {
  require_same_shape(x, y, "ssim_global");
  const int h = x.height(), w = x.width();
  if (h < opt.window || w < opt.window)
    throw ShapeError("ssim_global needs images of at least " + std::to_string(opt.window) + " pixels per side");
  const auto lx = luminance(x), ly = luminance(y);
  auto px = lx.channel(0), py = ly.channel(0);
  const std::size_t n = px.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = px[i] * px[i];
    yy[i] = py[i] * py[i];
    xy[i] = px[i] * py[i];
  }
  const auto g = detail::gaussian_window(opt.window, opt.sigma);
  const auto mx = detail::filter_valid(px, h, w, g), my = detail::filter_valid(py, h, w, g);
  const auto exx = detail::filter_valid(xx, h, w, g), eyy = detail::filter_valid(yy, h, w, g),
             exy = detail::filter_valid(xy, h, w, g);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const std::size_t m = mx.size();
  std::vector<double> d_mu, d_eyy, d_exy;
  if (grad_y) d_mu.resize(m), d_eyy.resize(m), d_exy.resize(m);
  double total = 0.0;
  for (std::size_t p = 0; p < m; ++p) {
    const double a1 = 2 * mx[p] * my[p] + c1;
    const double a2 = 2 * (exy[p] - mx[p] * my[p]) + c2;
    const double b1 = mx[p] * mx[p] + my[p] * my[p] + c1;
    const double b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + c2;
    const double s = a1 * a2 / (b1 * b2);
    total += s;
    if (grad_y) {
      d_mu[p] = (2 * mx[p] * a2 - 2 * mx[p] * a1) / (b1 * b2) - s * (2 * my[p] / b1 - 2 * my[p] / b2);
      d_eyy[p] = -s / b2;
      d_exy[p] = 2 * a1 / (b1 * b2);
    }
  }
  const double mean = total / static_cast<double>(m);
  if (grad_y) {
    const double inv = 1.0 / static_cast<double>(m);
    const auto gm = detail::filter_valid_adjoint(d_mu, h, w, g);
    const auto gyy = detail::filter_valid_adjoint(d_eyy, h, w, g);
    const auto gxy = detail::filter_valid_adjoint(d_exy, h, w, g);
    *grad_y = Tensor3<T>(3, h, w);
    const std::array<double, 3> luma = {kLumaR, kLumaG, kLumaB};
    for (std::size_t i = 0; i < n; ++i) {
      const double gl = inv * (gm[i] + 2 * py[i] * gyy[i] + px[i] * gxy[i]);
      for (int c = 0; c < 3; ++c) grad_y->channel(c)[i] = static_cast<T>(luma[c] * gl);
    }
  }
  return mean;
}

}  // namespace dists
