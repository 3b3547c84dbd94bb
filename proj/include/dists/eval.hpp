#pragma once

// Evaluation protocols: correlation criteria, the four-parameter logistic
// remapping applied before PLCC, 2AFC agreement, reciprocal rank fusion,
// retrieval mAP and k-NN classification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dists/errors.hpp"

namespace dists::eval {

inline void require_paired(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size())
    throw ShapeError(std::string(who) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  if (a.size() < 2) throw std::invalid_argument(std::string(who) + ": needs at least two scores");
}

/// Pearson correlation; NaN when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  require_paired(a, b, "pearson");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

/// 1-based ranks with ties replaced by their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double srcc(std::span<const double> a, std::span<const double> b) {
  require_paired(a, b, "srcc");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

namespace detail {

// Merge sort counting inversions (strict exchanges) of `v`.
inline std::int64_t count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_swaps(v, buf, lo, mid) + count_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum over runs of equal values of t(t-1)/2, for a sorted sequence.
template <class Eq>
std::int64_t tied_pairs(std::size_t n, Eq eq) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && eq(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace detail

/// Kendall tau-b (tie adjusted), O(n log n). NaN when either side is constant.
inline double krcc(std::span<const double> a, std::span<const double> b) {
  require_paired(a, b, "krcc");
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });
  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return a[idx[i]] == a[idx[j]]; });
  const std::int64_t n3 = detail::tied_pairs(
      n, [&](std::size_t i, std::size_t j) { return a[idx[i]] == a[idx[j]] && b[idx[i]] == b[idx[j]]; });
  std::vector<double> bs(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = b[idx[i]];
  const std::int64_t swaps = detail::count_swaps(bs, buf, 0, n);
  const std::int64_t n2 = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return bs[i] == bs[j]; });
  const std::int64_t numer = n0 - n1 - n2 + n3 - 2 * swaps;  // concordant - discordant
  const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(numer) / denom;
}

/// Parameters of D_hat = (eta1 - eta2) / (1 + exp(-(D - eta3) / |eta4|)) + eta2.
struct LogisticParams {
  double eta1 = 1, eta2 = 0, eta3 = 0, eta4 = 1;

  double operator()(double d) const { return (eta1 - eta2) / (1.0 + std::exp(-(d - eta3) / std::abs(eta4))) + eta2; }
};

struct LogisticFit {
  LogisticParams params;
  double rms_residual = 0;  // of the fitted curve
  double initial_rms = 0;   // of the starting curve
};

namespace detail {

struct SimplexOptions {
  int max_evals = 20000;
  double ftol = 1e-30;
  double xtol = 1e-14;
};

/// Nelder-Mead downhill simplex (standard coefficients) from x0 with per-axis initial steps.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, const std::vector<double>& steps,
                                       SimplexOptions opt = {}) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += steps[i];
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);
  int evals = static_cast<int>(n + 1);
  std::vector<std::size_t> order(n + 1);

  while (evals < opt.max_evals) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return vals[i] < vals[j]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    double spread = 0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t k = 0; k < n; ++k) spread = std::max(spread, std::abs(pts[i][k] - pts[best][k]));
    if (std::abs(vals[worst] - vals[best]) <= opt.ftol && spread <= opt.xtol) break;
    if (spread <= opt.xtol * 1e-3) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k] / static_cast<double>(n);
    const auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) p[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = f(xr);
    ++evals;
    if (fr < vals[best]) {
      auto xe = along(-2.0);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) pts[worst] = xe, vals[worst] = fe;
      else pts[worst] = xr, vals[worst] = fr;
    } else if (fr < vals[second]) {
      pts[worst] = xr, vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      auto xc = along(outside ? -0.5 : 0.5);
      const double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = xc, vals[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t k = 0; k < n; ++k) pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
          vals[i] = f(pts[i]);
          ++evals;
        }
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return pts[static_cast<std::size_t>(it - vals.begin())];
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Least-squares fit of the logistic curve mapping model scores to MOS.
///
/// The simplex search runs on standardized data in the coordinates
/// (center value, center slope, center, log width), in which the curve tends
/// smoothly to a straight line as the width grows. Starts from eta1 = max mos,
/// eta2 = min mos, eta3 = median D, eta4 = std D and restarts until the
/// residual stops improving.
inline LogisticFit logistic_fit(std::span<const double> d, std::span<const double> mos) {
  if (d.size() != mos.size()) throw ShapeError("logistic_fit: length mismatch");
  if (d.size() < 4) throw FitError("logistic fit needs at least 4 points");
  const double n = static_cast<double>(d.size());
  const auto mean_std = [n](std::span<const double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / n)};
  };
  const auto [md, sd] = mean_std(d);
  auto [mm, sm] = mean_std(mos);
  for (double x : d)
    if (!std::isfinite(x)) throw FitError("logistic fit input is not finite");
  if (std::all_of(d.begin(), d.end(), [&](double x) { return x == d.front(); }))
    throw FitError("logistic fit needs non-constant model scores");
  if (!(sm > 0)) sm = 1.0;

  std::vector<double> u(d.size()), v(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) u[i] = (d[i] - md) / sd, v[i] = (mos[i] - mm) / sm;

  // p = {center value c, center slope m, center t0, log width}
  const auto curve = [](const std::vector<double>& p, double x) {
    const double s = std::exp(p[3]);
    return p[0] + 2.0 * p[1] * s * std::tanh((x - p[2]) / (2.0 * s));
  };
  const auto sse = [&](const std::vector<double>& p) {
    if (!std::isfinite(p[3]) || std::abs(p[3]) > 700) return std::numeric_limits<double>::infinity();
    double acc = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double r = curve(p, u[i]) - v[i];
      acc += r * r;
    }
    return std::isfinite(acc) ? acc : std::numeric_limits<double>::infinity();
  };

  // For fixed center and width the curve is linear in (c, m): solve those exactly.
  const auto profile = [&](const std::vector<double>& q, double* c, double* m) {
    const double s = std::exp(q[1]);
    if (!std::isfinite(s) || std::abs(q[1]) > 700) return std::numeric_limits<double>::infinity();
    std::vector<double> g(u.size());
    double gm = 0, vm = 0;
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = std::tanh((u[i] - q[0]) / (2.0 * s)), gm += g[i], vm += v[i];
    gm /= n, vm /= n;
    double gg = 0, gv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) gg += (g[i] - gm) * (g[i] - gm), gv += (g[i] - gm) * (v[i] - vm);
    const double b = gg > 1e-300 ? gv / gg : 0.0, a = vm - b * gm;
    if (c) *c = a, *m = b / (2.0 * s);
    double acc = 0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += (a + b * g[i] - v[i]) * (a + b * g[i] - v[i]);
    return acc;
  };
  const auto reduced = [&](const std::vector<double>& q) { return profile(q, nullptr, nullptr); };

  const double hi = *std::max_element(v.begin(), v.end()), lo = *std::min_element(v.begin(), v.end());
  const std::vector<double> p0 = {(hi + lo) / 2, (hi - lo) / 4, detail::median(u), 0.0};
  const double f0 = sse(p0);

  const double umin = *std::min_element(u.begin(), u.end()), umax = *std::max_element(u.begin(), u.end());
  std::vector<double> q = {p0[2], 0.0};
  double fq = reduced(q);
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 24; ++j) {
      const std::vector<double> t = {umin + (umax - umin) * i / 40.0, std::log(1e-3) + std::log(1e4) * j / 24.0};
      if (const double ft = reduced(t); ft < fq) q = t, fq = ft;
    }
  for (int restart = 0; restart < 20; ++restart) {
    auto r = detail::nelder_mead(reduced, q, {0.05 * (umax - umin), 0.2});
    const double fr = reduced(r);
    if (!(fr < fq)) break;
    const bool small_gain = fq - fr <= 1e-15 * fq;
    q = std::move(r);
    fq = fr;
    if (small_gain) break;
  }
  double c0 = 0, m0 = 0;
  profile(q, &c0, &m0);
  std::vector<double> p = {c0, m0, q[0], q[1]};
  double best = sse(p);
  for (int restart = 0; restart < 50; ++restart) {
    auto r = detail::nelder_mead(sse, p, {0.1, 0.1, 0.1, 0.5});
    const double fr = sse(r);
    if (!(fr < best)) break;
    const bool small_gain = best - fr <= 1e-15 * best;
    p = std::move(r);
    best = fr;
    if (small_gain) break;
  }

  LogisticFit fit;
  const double s = std::exp(p[3]);
  const double c = mm + sm * p[0], slope_term = 2.0 * sm * p[1] * s;
  fit.params = {c + slope_term, c - slope_term, md + sd * p[2], sd * s};
  fit.rms_residual = std::sqrt(best / n) * sm;
  fit.initial_rms = std::sqrt(f0 / n) * sm;
  return fit;
}

/// Pearson correlation between MOS and logistically remapped model scores.
inline double plcc(std::span<const double> d, std::span<const double> mos, LogisticParams* fitted = nullptr) {
  require_paired(d, mos, "plcc");
  const auto fit = logistic_fit(d, mos);
  std::vector<double> mapped(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mapped[i] = fit.params(d[i]);
  if (fitted) *fitted = fit.params;
  return pearson(mapped, mos);
}

/// p * p_hat + (1 - p)(1 - p_hat) for a human preference fraction p and a binary model choice.
inline double two_afc(double p, int p_hat) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("2AFC preference fraction outside [0, 1]");
  if (p_hat != 0 && p_hat != 1) throw std::invalid_argument("2AFC model choice must be 0 or 1");
  return p * p_hat + (1 - p) * (1 - p_hat);
}

inline double two_afc(std::span<const double> p, std::span<const int> p_hat) {
  if (p.size() != p_hat.size() || p.empty()) throw ShapeError("2AFC batch sizes differ or are empty");
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += two_afc(p[i], p_hat[i]);
  return acc / static_cast<double>(p.size());
}

/// Default additive constant of reciprocal rank fusion.
inline constexpr double kRrfGamma = 60.0;

struct FusedRanking {
  std::vector<int> order;            // item ids, best first
  std::map<int, double> score;       // sum_k 1 / (gamma + r_k)
};

/// Fuses per-subject rankings (each a list of item ids, best first, rank 1 at index 0).
inline FusedRanking rrf(const std::vector<std::vector<int>>& rankings, double gamma = kRrfGamma) {
  if (rankings.empty()) throw std::invalid_argument("rrf needs at least one ranking");
  if (!(gamma > 0)) throw std::invalid_argument("rrf gamma must be positive");
  const std::set<int> items(rankings.front().begin(), rankings.front().end());
  if (items.size() != rankings.front().size()) throw std::invalid_argument("rrf ranking repeats an item");
  FusedRanking out;
  for (const auto& r : rankings) {
    if (r.size() != items.size() || std::set<int>(r.begin(), r.end()) != items)
      throw std::invalid_argument("rrf rankings cover different item sets");
    for (std::size_t k = 0; k < r.size(); ++k) out.score[r[k]] += 1.0 / (gamma + static_cast<double>(k + 1));
  }
  out.order.assign(items.begin(), items.end());
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](int a, int b) { return out.score.at(a) > out.score.at(b); });
  return out;
}

/// Average precision of one ranked list: (1/K) sum_k P(k) rel(k) over the whole list.
inline double average_precision(const std::vector<int>& ranked, const std::set<int>& relevant) {
  if (relevant.empty()) throw std::invalid_argument("query has no relevant items");
  double hits = 0, acc = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (relevant.count(ranked[k])) {
      hits += 1;
      acc += hits / static_cast<double>(k + 1);
    }
  }
  return acc / static_cast<double>(relevant.size());
}

inline double map_score(const std::vector<std::vector<int>>& ranked_lists, const std::vector<std::set<int>>& relevance) {
  if (ranked_lists.size() != relevance.size() || ranked_lists.empty())
    throw ShapeError("map_score needs one relevance set per query");
  double acc = 0;
  for (std::size_t q = 0; q < ranked_lists.size(); ++q) acc += average_precision(ranked_lists[q], relevance[q]);
  return acc / static_cast<double>(ranked_lists.size());
}

struct Neighbor {
  double distance;
  int label;
};

/// Majority vote over the k nearest training items; ties go to the label with
/// the smaller mean distance among its voters, then to the smaller label.
inline int knn_classify(std::vector<Neighbor> train, int k) {
  if (train.empty()) throw std::invalid_argument("knn_classify: empty training set");
  if (k < 1) throw std::invalid_argument("knn_classify: k must be >= 1");
  std::stable_sort(train.begin(), train.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), train.size());
  std::map<int, std::pair<int, double>> votes;  // label -> (count, distance sum)
  for (std::size_t i = 0; i < kk; ++i) {
    auto& v = votes[train[i].label];
    ++v.first;
    v.second += train[i].distance;
  }
  int best = votes.begin()->first;
  for (const auto& [label, v] : votes) {
    const auto& b = votes.at(best);
    if (v.first > b.first || (v.first == b.first && v.second / v.first < b.second / b.first)) best = label;
  }
  return best;
}

}  // namespace dists::eval
