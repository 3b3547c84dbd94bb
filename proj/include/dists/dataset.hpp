#pragma once

// Turning images into training sources: (l, s) caches for quality pairs and
// same-texture crop pairs, plus a source that recomputes every forward.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dists/backbone.hpp"
#include "dists/metric.hpp"
#include "dists/optim.hpp"
#include "dists/parallel.hpp"

namespace dists {

template <class T = float>
struct ImagePair {
  Tensor3<T> ref;
  Tensor3<T> dist;
  double q = 0;
};

/// (l, s) between two images; both are rescaled by `min_side` (<= 0 keeps the size).
template <class T>
Similarities pair_similarities(const NetworkGraph<T>& graph, const Tensor3<T>& x, const Tensor3<T>& y,
                               int min_side = 0, double c1 = kDefaultC1, double c2 = kDefaultC2) {
  require_same_shape(x, y, "pair_similarities");
  const auto fx = extract_features(graph, rescale_min_side(x, min_side));
  const auto fy = extract_features(graph, rescale_min_side(y, min_side));
  return similarities(fx, fy, c1, c2);
}

template <class T>
CachedQualitySource build_quality_cache(const NetworkGraph<T>& graph, const std::vector<ImagePair<T>>& pairs,
                                        int min_side = 0, double c1 = kDefaultC1, double c2 = kDefaultC2) {
  std::vector<QualityExample> ex(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    ex[i] = {pair_similarities(graph, pairs[i].ref, pairs[i].dist, min_side, c1, c2), pairs[i].q};
  });
  return CachedQualitySource(std::move(ex));
}

template <class T>
CachedTextureSource build_texture_cache(const NetworkGraph<T>& graph,
                                        const std::vector<std::pair<Tensor3<T>, Tensor3<T>>>& crops,
                                        int min_side = 0, double c1 = kDefaultC1, double c2 = kDefaultC2) {
  std::vector<Similarities> sims(crops.size());
  parallel_for(crops.size(), [&](std::size_t i) {
    sims[i] = pair_similarities(graph, crops[i].first, crops[i].second, min_side, c1, c2);
  });
  return CachedTextureSource(std::move(sims));
}

/// Quality source that runs both network forwards on every access.
template <class T>
class RecomputingQualitySource {
 public:
  RecomputingQualitySource(const NetworkGraph<T>& graph, const std::vector<ImagePair<T>>& pairs, int min_side = 0)
      : graph_(&graph), pairs_(&pairs), min_side_(min_side) {}
  std::size_t size() const { return pairs_->size(); }
  Similarities similarities(std::size_t i) const {
    const auto& p = pairs_->at(i);
    return pair_similarities(*graph_, p.ref, p.dist, min_side_);
  }
  double score(std::size_t i) const { return pairs_->at(i).q; }

 private:
  const NetworkGraph<T>* graph_;
  const std::vector<ImagePair<T>>* pairs_;
  int min_side_;
};

template <class T>
Tensor3<T> crop(const Tensor3<T>& im, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > im.height() || left + w > im.width())
    throw ShapeError("crop window outside " + shape_string(im));
  Tensor3<T> out(im.channels(), h, w);
  for (int c = 0; c < im.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = im(c, top + y, left + x);
  return out;
}

/// `per_texture` pairs of independent random size x size crops from each texture.
template <class T>
std::vector<std::pair<Tensor3<T>, Tensor3<T>>> texture_crop_pairs(const std::vector<Tensor3<T>>& textures,
                                                                  int per_texture, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Tensor3<T>, Tensor3<T>>> out;
  for (const auto& t : textures) {
    if (t.height() < size || t.width() < size)
      throw ShapeError("texture " + shape_string(t) + " smaller than crop size " + std::to_string(size));
    std::uniform_int_distribution<int> ty(0, t.height() - size), tx(0, t.width() - size);
    for (int k = 0; k < per_texture; ++k) {
      const int y1 = ty(rng), x1 = tx(rng), y2 = ty(rng), x2 = tx(rng);
      out.emplace_back(crop(t, y1, x1, size, size), crop(t, y2, x2, size, size));
    }
  }
  return out;
}

}  // namespace dists
