#pragma once

// Gradient descent on pixels: texture synthesis by matching stage-wise
// channel means, and recovery of a reference by minimizing a full-reference
// distance from some starting image.

#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dists/backbone.hpp"
#include "dists/errors.hpp"
#include "dists/metric.hpp"
#include "dists/tape.hpp"

namespace dists {

using StageMask = std::bitset<kStageCount>;

/// "all", a single stage "3", a range "0-2", or a comma list "0,2,5".
inline StageMask parse_stage_mask(const std::string& text) {
  StageMask m;
  if (text == "all") return m.set();
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const auto dash = part.find('-');
    try {
      const int lo = std::stoi(part.substr(0, dash));
      const int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
      if (lo < 0 || hi >= kStageCount || lo > hi) throw std::out_of_range("stage");
      for (int s = lo; s <= hi; ++s) m.set(s);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad stage mask '" + text + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return m;
}

inline int highest_stage(StageMask m) {
  for (int s = kStageCount - 1; s >= 0; --s)
    if (m.test(s)) return s;
  return -1;
}

using StageMeans = std::array<std::vector<double>, kStageCount>;

template <class T>
StageMeans stage_means(const FeatureStack<T>& fs) {
  StageMeans out;
  for (int i = 0; i < kStageCount; ++i) {
    const auto& st = fs.stages[i];
    for (int c = 0; c < st.channels(); ++c) {
      double acc = 0;
      for (T v : st.channel(c)) acc += v;
      out[i].push_back(acc / static_cast<double>(st.plane()));
    }
  }
  return out;
}

/// Sum over masked stages of squared channel-mean differences between a
/// fixed target and y. Fills `grad` with d/dy when given.
template <class T>
double texture_objective(const NetworkGraph<T>& graph, const StageMeans& target, const Tensor3<T>& y, StageMask mask,
                         Tensor3<T>* grad = nullptr) {
  if (mask.none()) throw std::invalid_argument("texture objective needs at least one stage");
  if (mask.test(0) && !graph.options().include_stage0)
    throw std::invalid_argument("stage 0 masked but excluded from the graph");
  const int last = highest_stage(mask);
  Tape<T> tape;
  const auto fy = extract_features(graph, y, grad ? &tape : nullptr, last);
  double total = 0;
  for (int i = 0; i <= last; ++i) {
    if (!mask.test(i)) continue;
    const auto& st = fy.stages[i];
    if (target[i].size() != static_cast<std::size_t>(st.channels()))
      throw ShapeError("target means do not match stage " + std::to_string(i));
    Tensor3<T> g(st.channels(), st.height(), st.width());
    double stage_total = 0;
    for (int c = 0; c < st.channels(); ++c) {
      double acc = 0;
      for (T v : st.channel(c)) acc += v;
      const double diff = acc / static_cast<double>(st.plane()) - target[i][c];
      stage_total += diff * diff;
      const T gv = static_cast<T>(2 * diff / static_cast<double>(st.plane()));
      for (T& v : g.channel(c)) v = gv;
    }
    total += stage_total;
    if (grad) tape.add_loss(fy.vars[i], stage_total, std::move(g));
  }
  if (grad) *grad = tape.backward();
  return total;
}

enum class StepRule { gradient_descent, adam };

struct DescentConfig {
  StepRule rule = StepRule::adam;
  double step = 0.01;
  int max_iters = 2000;
  /// Stop when the objective changed by less than rel_tol (relative) over tol_window iterations.
  double rel_tol = 1e-6;
  int tol_window = 100;
  /// Stop as soon as the objective is at or below this value.
  double abs_tol = 0.0;
  bool clamp_unit = true;
};

template <class T>
struct DescentResult {
  Tensor3<T> image;
  std::vector<double> trace;  // objective at each evaluated iterate
  int iterations = 0;
  bool converged = false;
};

template <class T>
using PixelObjective = std::function<double(const Tensor3<T>& y, Tensor3<T>* grad)>;

/// Minimizes `objective` over pixels from `init`. Throws OptimizationError on
/// a non-finite objective or gradient; `last_stable` then holds the last
/// finite iterate.
template <class T>
DescentResult<T> minimize_pixels(const PixelObjective<T>& objective, Tensor3<T> init, const DescentConfig& cfg,
                                 Tensor3<T>* last_stable = nullptr) {
  if (cfg.max_iters < 1) throw std::invalid_argument("iteration budget must be at least 1");
  DescentResult<T> r;
  Tensor3<T> y = std::move(init);
  if (cfg.clamp_unit) clamp_unit(y);
  Tensor3<T> grad, prev_y, prev_grad;
  double prev_value = std::numeric_limits<double>::infinity();
  double step = cfg.step;
  std::vector<double> m(y.size(), 0.0), v(y.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;

  const auto finite = [](const Tensor3<T>& g) {
    for (T x : g.values())
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  };

  for (int it = 0; it < cfg.max_iters; ++it) {
    double value = objective(y, &grad);
    if (!std::isfinite(value) || !finite(grad)) {
      if (last_stable) *last_stable = r.trace.empty() ? y : prev_y;
      throw OptimizationError("pixel optimization diverged", it);
    }
    if (cfg.rule == StepRule::gradient_descent && value > prev_value) {
      // Reject the step and retry from the previous iterate with half the step.
      step *= 0.5;
      y = prev_y;
      grad = prev_grad;
      value = prev_value;
    }
    r.trace.push_back(value);
    r.iterations = it + 1;
    if (value <= cfg.abs_tol) {
      r.converged = true;
      break;
    }
    const auto n = r.trace.size();
    if (n > static_cast<std::size_t>(cfg.tol_window)) {
      const double old = r.trace[n - 1 - cfg.tol_window];
      if (std::abs(old - value) <= cfg.rel_tol * std::abs(old)) {
        r.converged = true;
        break;
      }
    }
    prev_y = y;
    prev_grad = grad;
    prev_value = value;

    auto yv = y.values();
    auto gv = grad.values();
    if (cfg.rule == StepRule::adam) {
      ++t;
      const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
      for (std::size_t i = 0; i < yv.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * gv[i];
        v[i] = b2 * v[i] + (1 - b2) * gv[i] * gv[i];
        yv[i] -= static_cast<T>(step * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
      }
    } else {
      for (std::size_t i = 0; i < yv.size(); ++i) yv[i] -= static_cast<T>(step * gv[i]);
    }
    if (cfg.clamp_unit) clamp_unit(y);
  }
  // The returned image is the last evaluated iterate, matching trace.back().
  r.image = r.converged ? std::move(y) : std::move(prev_y);
  return r;
}

enum class InitMode { uniform_noise, image };

struct SynthesisConfig {
  StageMask mask = StageMask().set();
  DescentConfig descent{};
  std::uint64_t seed = 0;
  InitMode init = InitMode::uniform_noise;
};

template <class T>
Tensor3<T> uniform_noise_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor3<T> im(3, h, w);
  for (T& v : im.values()) v = static_cast<T>(u(rng));
  return im;
}

/// Texture synthesis: finds y whose masked stage means match those of `texture`.
template <class T>
DescentResult<T> synthesize(const NetworkGraph<T>& graph, const Tensor3<T>& texture, const SynthesisConfig& cfg,
                            const Tensor3<T>* init_image = nullptr, Tensor3<T>* last_stable = nullptr) {
  require_rgb(texture, "synthesize");
  if (cfg.mask.none()) throw std::invalid_argument("synthesis mask selects no stage");
  const auto target = stage_means(extract_features(graph, texture, nullptr, highest_stage(cfg.mask)));
  Tensor3<T> init;
  if (cfg.init == InitMode::image) {
    if (!init_image) throw std::invalid_argument("image initialization needs an init image");
    init = *init_image;
  } else {
    init = uniform_noise_image<T>(texture.height(), texture.width(), cfg.seed);
  }
  PixelObjective<T> f = [&](const Tensor3<T>& y, Tensor3<T>* g) {
    return texture_objective(graph, target, y, cfg.mask, g);
  };
  return minimize_pixels(f, std::move(init), cfg.descent, last_stable);
}

/// D(x, y) under the given graph and weights, differentiated through the network.
template <class T>
PixelObjective<T> dists_objective(const NetworkGraph<T>& graph, const Tensor3<T>& reference, const WeightSet& w) {
  auto fx = std::make_shared<FeatureStack<T>>(extract_features(graph, reference));
  return [&graph, fx, w](const Tensor3<T>& y, Tensor3<T>* grad) {
    if (!grad) return dists(*fx, extract_features(graph, y), w);
    Tape<T> tape;
    const auto fy = extract_features(graph, y, &tape);
    const double d = add_dists_loss(tape, *fx, fy, w);
    *grad = tape.backward();
    return d;
  };
}

template <class T>
PixelObjective<T> mse_objective(const Tensor3<T>& reference) {
  return [reference](const Tensor3<T>& y, Tensor3<T>* grad) {
    const double m = mse(reference, y);
    if (grad) {
      *grad = Tensor3<T>(y.channels(), y.height(), y.width());
      const double scale = 2.0 / static_cast<double>(y.size());
      auto g = grad->values();
      auto a = reference.values();
      auto b = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(scale * (static_cast<double>(b[i]) - a[i]));
    }
    return m;
  };
}

/// 1 - SSIM(x, y).
template <class T>
PixelObjective<T> ssim_objective(const Tensor3<T>& reference) {
  return [reference](const Tensor3<T>& y, Tensor3<T>* grad) {
    const double s = ssim_global(reference, y, grad);
    if (grad)
      for (T& v : grad->values()) v = -v;
    return 1.0 - s;
  };
}

/// Reference recovery: minimizes a full-reference measure starting from `init`.
template <class T>
DescentResult<T> recover(const PixelObjective<T>& measure, const Tensor3<T>& init, const DescentConfig& cfg,
                         Tensor3<T>* last_stable = nullptr) {
  return minimize_pixels(measure, init, cfg, last_stable);
}

}  // namespace dists
