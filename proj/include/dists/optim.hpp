#pragma once

// Learning the alpha/beta weights. Because D is linear in the weights, each
// image pair contributes a fixed (l, s) vector and the network forward never
// has to be differentiated here.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dists/errors.hpp"
#include "dists/metric.hpp"

namespace dists {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moment state over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  double lambda = 1.0;
  double learning_rate = 1e-4;
  int lr_halving_period = 1000;
  int total_iters = 5000;
  int batch_size = 32;
  double stage0_floor = kStage0Floor;
  AdamConfig adam;

  void validate() const {
    if (lambda < 0 || learning_rate <= 0 || lr_halving_period <= 0 || total_iters <= 0 || batch_size <= 0 ||
        stage0_floor < 0 || stage0_floor >= 1)
      throw std::invalid_argument("invalid training configuration");
  }
};

/// sum(alpha (1 - l) + beta (1 - s)) for arbitrary (not necessarily feasible) weights.
inline double linear_prediction(const Similarities& sim, const WeightSet& w) {
  if (sim.size() != w.size()) throw ShapeError("weight/channel count mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < sim.size(); ++k) acc += w.alpha()[k] * (1.0 - sim.l[k]) + w.beta()[k] * (1.0 - sim.s[k]);
  return acc;
}

/// |D(x, y; w) - q|
inline double loss_e1(const Similarities& sim, double q, const WeightSet& w) {
  return std::abs(linear_prediction(sim, w) - q);
}

/// D(z1, z2; w) between two crops of one texture.
inline double loss_e2(const Similarities& sim, const WeightSet& w) { return linear_prediction(sim, w); }

/// Gradient of loss_e1 with respect to (alpha, beta), written into `ga`, `gb` scaled by `scale`.
inline void accumulate_e1_grad(const Similarities& sim, double q, const WeightSet& w, double scale,
                               std::span<double> ga, std::span<double> gb) {
  const double r = linear_prediction(sim, w) - q;
  const double sign = (r > 0) - (r < 0);
  for (std::size_t k = 0; k < sim.size(); ++k) {
    ga[k] += scale * sign * (1.0 - sim.l[k]);
    gb[k] += scale * sign * (1.0 - sim.s[k]);
  }
}

inline void accumulate_e2_grad(const Similarities& sim, double scale, std::span<double> ga, std::span<double> gb) {
  for (std::size_t k = 0; k < sim.size(); ++k) {
    ga[k] += scale * (1.0 - sim.l[k]);
    gb[k] += scale * (1.0 - sim.s[k]);
  }
}

struct QualityExample {
  Similarities sim;
  double q = 0;
};

/// Mean E1 over the quality examples plus lambda times mean E2 over the texture pairs.
inline double combined_loss(std::span<const QualityExample> quality, std::span<const Similarities> texture,
                            const WeightSet& w, double lambda) {
  if (quality.empty() || texture.empty()) throw std::invalid_argument("combined_loss needs nonempty batches");
  double e1 = 0, e2 = 0;
  for (const auto& ex : quality) e1 += loss_e1(ex.sim, ex.q, w);
  for (const auto& t : texture) e2 += loss_e2(t, w);
  return e1 / static_cast<double>(quality.size()) + lambda * e2 / static_cast<double>(texture.size());
}

/// Clamp to the feasible set: entries >= 0, stage-0 entries in [floor, 1],
/// total one. Stage-0 entries are fixed after clamping and the remaining
/// entries rescaled to fill the rest of the unit budget. When stage 0 alone
/// exceeds the budget, the free entries are zeroed and stage 0 is scaled
/// down, entries that would fall below the floor being held at it.
inline WeightSet project_weights(WeightSet w, double floor = kStage0Floor) {
  const std::size_t n0 = w.stage0_count();
  const std::size_t n = w.size();
  auto& a = w.alpha();
  auto& b = w.beta();
  if (n == 0) return w;
  if (2.0 * static_cast<double>(n0) * floor > 1.0) throw std::invalid_argument("stage-0 floor is infeasible");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(a[i])) a[i] = 0;
    if (!std::isfinite(b[i])) b[i] = 0;
    a[i] = std::max(a[i], 0.0);
    b[i] = std::max(b[i], 0.0);
    if (i < n0) {
      a[i] = std::clamp(a[i], floor, 1.0);
      b[i] = std::clamp(b[i], floor, 1.0);
    }
  }
  double s0 = 0, rest = 0;
  for (std::size_t i = 0; i < n; ++i) (i < n0 ? s0 : rest) += a[i] + b[i];

  if (s0 <= 1.0 && n0 < n) {
    if (rest > 0) {
      const double f = (1.0 - s0) / rest;
      for (std::size_t i = n0; i < n; ++i) a[i] *= f, b[i] *= f;
    } else {
      const double v = (1.0 - s0) / (2.0 * static_cast<double>(n - n0));
      std::fill(a.begin() + static_cast<std::ptrdiff_t>(n0), a.end(), v);
      std::fill(b.begin() + static_cast<std::ptrdiff_t>(n0), b.end(), v);
    }
    return w;
  }

  // Stage 0 carries the whole budget: find f with sum(max(f v, floor)) = 1.
  for (std::size_t i = n0; i < n; ++i) a[i] = b[i] = 0;
  std::vector<double*> v;
  for (std::size_t i = 0; i < n0; ++i) v.push_back(&a[i]), v.push_back(&b[i]);
  std::sort(v.begin(), v.end(), [](const double* x, const double* y) { return *x < *y; });
  double tail = 0;
  for (const double* p : v) tail += *p;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double f = (1.0 - static_cast<double>(k) * floor) / tail;
    if (f * *v[k] >= floor) {
      for (std::size_t j = 0; j < v.size(); ++j) *v[j] = j < k ? floor : f * *v[j];
      break;
    }
    tail -= *v[k];
  }
  return w;
}

/// Initial weights: uniform, then projected.
inline WeightSet initial_weights(std::array<int, kStageCount> stage_channels, double floor = kStage0Floor) {
  return project_weights(WeightSet::uniform(stage_channels), floor);
}

template <class S>
concept QualitySource = requires(S& s, std::size_t i) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.similarities(i) } -> std::convertible_to<Similarities>;
  { s.score(i) } -> std::convertible_to<double>;
};

template <class S>
concept TextureSource = requires(S& s, std::size_t i) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.similarities(i) } -> std::convertible_to<Similarities>;
};

/// Quality pairs whose (l, s) vectors were computed once up front.
class CachedQualitySource {
 public:
  CachedQualitySource() = default;
  explicit CachedQualitySource(std::vector<QualityExample> examples) : examples_(std::move(examples)) {}
  std::size_t size() const { return examples_.size(); }
  const Similarities& similarities(std::size_t i) const { return examples_.at(i).sim; }
  double score(std::size_t i) const { return examples_.at(i).q; }
  const std::vector<QualityExample>& examples() const { return examples_; }

 private:
  std::vector<QualityExample> examples_;
};

class CachedTextureSource {
 public:
  CachedTextureSource() = default;
  explicit CachedTextureSource(std::vector<Similarities> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const { return pairs_.size(); }
  const Similarities& similarities(std::size_t i) const { return pairs_.at(i); }

 private:
  std::vector<Similarities> pairs_;
};

/// Draws indices in reshuffled epochs: without replacement inside an epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::mt19937_64& rng) : rng_(rng), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n;
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::mt19937_64& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

struct TrainResult {
  WeightSet weights;
  std::vector<double> loss_trace;  // minibatch objective before each step
};

/// Adam on (alpha, beta) with step halving every lr_halving_period iterations
/// and projection after every step. Deterministic for a given seed.
template <QualitySource Q, TextureSource X>
TrainResult train(Q& quality, X& texture, const TrainConfig& cfg, WeightSet init, std::uint64_t seed) {
  cfg.validate();
  if (quality.size() == 0) throw IngestionError("quality source is empty");
  const bool use_texture = cfg.lambda > 0;
  if (use_texture && texture.size() == 0) throw IngestionError("texture source is empty");

  std::mt19937_64 rng(seed);
  EpochSampler qs(quality.size(), rng);
  EpochSampler ts(std::max<std::size_t>(texture.size(), 1), rng);

  WeightSet w = project_weights(std::move(init), cfg.stage0_floor);
  const std::size_t n = w.size();
  Adam adam(2 * n, cfg.adam);
  std::vector<double> params(2 * n), grad(2 * n);
  TrainResult result;
  result.loss_trace.reserve(cfg.total_iters);

  for (int it = 0; it < cfg.total_iters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::span<double> ga(grad.data(), n), gb(grad.data() + n, n);
    double e1 = 0, e2 = 0;
    const double bq = 1.0 / cfg.batch_size;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t i = qs.next();
      const Similarities& sim = quality.similarities(i);
      const double q = quality.score(i);
      if (sim.size() != n) throw ShapeError("training example channel count does not match the weights");
      e1 += loss_e1(sim, q, w);
      accumulate_e1_grad(sim, q, w, bq, ga, gb);
    }
    if (use_texture) {
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Similarities& sim = texture.similarities(ts.next());
        e2 += loss_e2(sim, w);
        accumulate_e2_grad(sim, cfg.lambda * bq, ga, gb);
      }
    }
    result.loss_trace.push_back(e1 * bq + cfg.lambda * e2 * bq);

    std::copy(w.alpha().begin(), w.alpha().end(), params.begin());
    std::copy(w.beta().begin(), w.beta().end(), params.begin() + static_cast<std::ptrdiff_t>(n));
    const double lr = cfg.learning_rate * std::pow(0.5, it / cfg.lr_halving_period);
    adam.step(params, grad, lr);
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n), w.alpha().begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(n), params.end(), w.beta().begin());
    w = project_weights(std::move(w), cfg.stage0_floor);
  }
  result.weights = std::move(w);
  return result;
}

/// Serializes trained weights as "alpha" and "beta" records plus the stage layout.
inline WeightFile to_weight_file(const WeightSet& w) {
  WeightFile f;
  const auto n = static_cast<std::uint32_t>(w.size());
  f.records.push_back({"alpha", {n}, std::vector<float>(w.alpha().begin(), w.alpha().end())});
  f.records.push_back({"beta", {n}, std::vector<float>(w.beta().begin(), w.beta().end())});
  std::vector<float> layout(w.stage_channels().begin(), w.stage_channels().end());
  f.records.push_back({"stage_channels", {static_cast<std::uint32_t>(kStageCount)}, layout});
  return f;
}

/// Reads a parameter container. Values are stored as binary32, so the set is
/// re-projected after loading.
inline WeightSet weights_from_file(const WeightFile& f) {
  const auto* a = f.find("alpha");
  const auto* b = f.find("beta");
  if (!a || !b) throw IncompatibleWeightsError("parameter file lacks alpha/beta records");
  if (a->dims.size() != 1 || a->dims != b->dims) throw IncompatibleWeightsError("alpha/beta shapes differ");
  std::array<int, kStageCount> layout{};
  if (const auto* l = f.find("stage_channels"); l && l->values.size() == kStageCount) {
    for (int i = 0; i < kStageCount; ++i) layout[i] = static_cast<int>(l->values[i]);
  } else {
    layout = {3, 64, 128, 256, 512, 512};
  }
  std::vector<double> alpha(a->values.begin(), a->values.end()), beta(b->values.begin(), b->values.end());
  try {
    return project_weights(WeightSet(layout, std::move(alpha), std::move(beta)));
  } catch (const ShapeError& e) {
    throw IncompatibleWeightsError(e.what());
  }
}

}  // namespace dists
