#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dists/tensor.hpp"

namespace dists {

/// Records a chain of tensor operations starting at one input so that the
/// gradient of a scalar loss with respect to that input can be replayed.
///
/// Conv and pool specs are held by pointer; they must outlive the tape.
/// The scalar output is the sum of every term registered with add_loss().
template <class T = float>
class Tape {
 public:
  using Var = int;

  Var input(Tensor3<T> x) {
    if (!nodes_.empty()) throw std::logic_error("tape already has an input");
    return push({Kind::input, -1, nullptr, nullptr, {}, std::move(x)});
  }

  Var conv2d(Var x, const ConvSpec<T>& spec) {
    return push({Kind::conv, x, &spec, nullptr, {}, dists::conv2d(value(x), spec)});
  }

  Var relu(Var x) { return push({Kind::relu, x, nullptr, nullptr, {}, dists::relu(value(x))}); }

  Var l2pool(Var x, const PoolSpec<T>& pool) {
    return push({Kind::l2pool, x, nullptr, &pool, {}, dists::l2pool(value(x), pool)});
  }

  Var max_pool(Var x) { return push({Kind::max_pool, x, nullptr, nullptr, {}, dists::max_pool(value(x))}); }

  Var channel_affine(Var x, std::vector<T> scale, const std::vector<T>& shift) {
    auto out = dists::channel_affine<T>(value(x), scale, shift);
    return push({Kind::affine, x, nullptr, nullptr, std::move(scale), std::move(out)});
  }

  const Tensor3<T>& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v)).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `loss_value` to the scalar output, with d(output)/d(value(v)) = grad.
  void add_loss(Var v, double loss_value, Tensor3<T> grad) {
    if (!value(v).same_shape(grad)) throw ShapeError("loss gradient shape differs from its variable");
    output_ += loss_value;
    seeds_.emplace_back(v, std::move(grad));
  }

  /// Convenience term: output += sum of all entries of v.
  void add_sum(Var v) {
    double total = 0.0;
    for (T x : value(v).values()) total += x;
    add_loss(v, total, Tensor3<T>(value(v).channels(), value(v).height(), value(v).width(), T{1}));
  }

  bool has_output() const { return !seeds_.empty(); }
  double output() const { return output_; }

  /// Gradient of seed * output with respect to the input tensor.
  Tensor3<T> backward(double seed = 1.0) const {
    if (!has_output()) throw std::logic_error("backward requires a scalar output (no loss terms recorded)");
    std::vector<Tensor3<T>> grads(nodes_.size());
    for (const auto& [v, g] : seeds_) accumulate(grads[v], g, static_cast<T>(seed));

    for (std::size_t i = nodes_.size(); i-- > 1;) {
      if (grads[i].empty()) continue;
      const Node& n = nodes_[i];
      const Tensor3<T>& in = nodes_[n.parent].value;
      Tensor3<T> g;
      switch (n.kind) {
        case Kind::conv:
          g = conv2d_backward(grads[i], *n.conv, in.height(), in.width());
          break;
        case Kind::relu:
          g = relu_backward(grads[i], in);
          break;
        case Kind::l2pool:
          g = l2pool_backward(grads[i], in, n.value, *n.pool);
          break;
        case Kind::max_pool:
          g = max_pool_backward(grads[i], in);
          break;
        case Kind::affine:
          g = std::move(grads[i]);
          for (int c = 0; c < g.channels(); ++c)
            for (T& x : g.channel(c)) x *= n.scale[c];
          break;
        case Kind::input:
          break;
      }
      accumulate(grads[n.parent], g, T{1});
      grads[i] = {};
    }
    if (grads[0].empty()) {
      const auto& x = nodes_[0].value;
      return Tensor3<T>(x.channels(), x.height(), x.width());
    }
    return std::move(grads[0]);
  }

 private:
  enum class Kind { input, conv, relu, l2pool, max_pool, affine };

  struct Node {
    Kind kind;
    Var parent;
    const ConvSpec<T>* conv;
    const PoolSpec<T>* pool;
    std::vector<T> scale;
    Tensor3<T> value;
  };

  Var push(Node n) {
    if (n.kind != Kind::input && (n.parent < 0 || static_cast<std::size_t>(n.parent) >= nodes_.size()))
      throw std::out_of_range("tape variable does not exist");
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  static void accumulate(Tensor3<T>& dst, const Tensor3<T>& src, T scale) {
    if (dst.empty()) {
      dst = src;
      if (scale != T{1})
        for (T& v : dst.values()) v *= scale;
      return;
    }
    auto d = dst.values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<Var, Tensor3<T>>> seeds_;
  double output_ = 0.0;
};

/// Free-function form: d(seed * output)/d(input) of a recorded scalar computation.
template <class T>
Tensor3<T> backward(const Tape<T>& tape, double seed = 1.0) {
  return tape.backward(seed);
}

}  // namespace dists
