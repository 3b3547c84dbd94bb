#pragma once

// ReLU activation patterns of a backbone, replayed layer by layer from the
// public tensor ops. Two inputs with the same pattern lie in one linear piece
// of every ReLU.

#include <vector>

#include "dists/backbone.hpp"

namespace oracle {

using dists::Tensor3;

inline std::vector<bool> activation_pattern(const dists::NetworkGraph<double>& g, const Tensor3<double>& pixels) {
  using Kind = dists::NetworkGraph<double>::LayerKind;
  std::vector<bool> pattern;
  auto x = dists::standardize(pixels);
  for (int i = 0; i <= g.taps().back(); ++i) {
    const auto& layer = g.layers()[i];
    if (layer.kind == Kind::conv) {
      x = dists::conv2d(x, g.convs()[layer.conv_index]);
      for (double v : x.values()) pattern.push_back(v > 0);
    } else if (layer.kind == Kind::relu) {
      x = dists::relu(x);
    } else {
      x = g.options().pooling == dists::PoolingKind::l2 ? dists::l2pool(x, g.pool()) : dists::max_pool(x);
    }
  }
  return pattern;
}

/// True when x_i +- h leaves every ReLU on the same side of zero.
inline auto same_relu_pattern(const dists::NetworkGraph<double>& g) {
  return [&g](const Tensor3<double>& x, std::size_t i, double h) {
    auto lo = x, hi = x;
    lo.values()[i] -= h;
    hi.values()[i] += h;
    return activation_pattern(g, lo) == activation_pattern(g, hi);
  };
}

}  // namespace oracle
