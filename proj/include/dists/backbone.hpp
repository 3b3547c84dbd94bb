#pragma once

// VGG16 feature network with l2 pooling, its weight loader, input
// preprocessing and the six-stage representation consumed by the metric.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "dists/errors.hpp"
#include "dists/image.hpp"
#include "dists/tape.hpp"
#include "dists/tensor.hpp"
#include "dists/weight_file.hpp"

namespace dists {

inline constexpr int kStageCount = 6;
inline constexpr int kTapCount = 5;

/// Number of conv layers in each of the five VGG16 blocks.
inline constexpr std::array<int, kTapCount> kConvsPerBlock = {2, 2, 3, 3, 3};
inline constexpr std::array<int, kTapCount> kVgg16Widths = {64, 128, 256, 512, 512};

/// ImageNet statistics the imported convolution weights were trained under.
inline constexpr std::array<double, 3> kImageNetMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd = {0.229, 0.224, 0.225};

enum class PoolingKind { l2, max };

struct BackboneOptions {
  PoolingKind pooling = PoolingKind::l2;
  bool include_stage0 = true;
  int hanning_size = 5;
};

/// conv1_1 ... conv5_3
inline std::vector<std::string> vgg16_conv_names() {
  std::vector<std::string> names;
  for (int b = 0; b < kTapCount; ++b)
    for (int l = 0; l < kConvsPerBlock[b]; ++l)
      names.push_back("conv" + std::to_string(b + 1) + "_" + std::to_string(l + 1));
  return names;
}

template <class T = float>
class NetworkGraph {
 public:
  enum class LayerKind { conv, relu, pool };
  struct Layer {
    LayerKind kind;
    int conv_index = -1;  // into convs() for conv layers
  };

  NetworkGraph(std::array<int, kTapCount> widths, std::vector<ConvSpec<T>> convs, BackboneOptions options)
      : widths_(widths), convs_(std::move(convs)), options_(options),
        pool_(hanning_pool<T>(options.hanning_size, 2)) {
    const auto names = vgg16_conv_names();
    if (convs_.size() != names.size()) throw ShapeError("feature network needs 13 conv layers");
    int in = 3;
    std::size_t ci = 0;
    for (int b = 0; b < kTapCount; ++b) {
      if (b > 0) layers_.push_back({LayerKind::pool});
      for (int l = 0; l < kConvsPerBlock[b]; ++l, ++ci) {
        const auto& c = convs_[ci];
        c.validate();
        if (c.in_channels != in || c.out_channels != widths_[b] || c.kernel_size != 3 || c.stride != 1 ||
            c.padding != 1)
          throw IncompatibleWeightsError("layer " + names[ci] + " does not fit the VGG16 topology");
        layers_.push_back({LayerKind::conv, static_cast<int>(ci)});
        layers_.push_back({LayerKind::relu});
        in = widths_[b];
      }
      taps_.push_back(static_cast<int>(layers_.size()) - 1);
    }
  }

  const std::vector<Layer>& layers() const { return layers_; }
  /// Index into layers() of the last layer of each block (the post-ReLU tap).
  const std::vector<int>& taps() const { return taps_; }
  const std::vector<ConvSpec<T>>& convs() const { return convs_; }
  const PoolSpec<T>& pool() const { return pool_; }
  const BackboneOptions& options() const { return options_; }
  const std::array<int, kTapCount>& widths() const { return widths_; }

  std::array<int, kStageCount> stage_channels() const {
    std::array<int, kStageCount> n{};
    n[0] = options_.include_stage0 ? 3 : 0;
    for (int i = 0; i < kTapCount; ++i) n[i + 1] = widths_[i];
    return n;
  }

  int total_channels() const {
    auto n = stage_channels();
    return std::accumulate(n.begin(), n.end(), 0);
  }

  NetworkGraph with_options(BackboneOptions options) const { return NetworkGraph(widths_, convs_, options); }

  template <class U>
  NetworkGraph<U> cast() const {
    std::vector<ConvSpec<U>> c;
    for (const auto& s : convs_) c.push_back(s.template cast<U>());
    return NetworkGraph<U>(widths_, std::move(c), options_);
  }

 private:
  std::array<int, kTapCount> widths_;
  std::vector<ConvSpec<T>> convs_;
  BackboneOptions options_;
  PoolSpec<T> pool_;
  std::vector<Layer> layers_;
  std::vector<int> taps_;
};

/// Builds a graph from a parsed container, checking every record against VGG16.
inline NetworkGraph<float> graph_from_weights(const WeightFile& file, BackboneOptions options = {}) {
  const auto names = vgg16_conv_names();
  std::vector<ConvSpec<float>> convs;
  int in = 3;
  std::size_t ci = 0;
  for (int b = 0; b < kTapCount; ++b) {
    for (int l = 0; l < kConvsPerBlock[b]; ++l, ++ci) {
      const int out = kVgg16Widths[b];
      const auto* w = file.find(names[ci] + ".weight");
      const auto* bias = file.find(names[ci] + ".bias");
      if (!w || !bias) throw IncompatibleWeightsError("missing record for layer " + names[ci]);
      const std::vector<std::uint32_t> wdims = {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in), 3,
                                                3};
      const std::vector<std::uint32_t> bdims = {static_cast<std::uint32_t>(out)};
      if (w->dims != wdims || bias->dims != bdims)
        throw IncompatibleWeightsError("shape mismatch in layer " + names[ci]);
      convs.push_back({in, out, 3, 1, 1, w->values, bias->values});
      in = out;
    }
  }
  return NetworkGraph<float>(kVgg16Widths, std::move(convs), options);
}

inline NetworkGraph<float> load_weights(const std::filesystem::path& path, BackboneOptions options = {}) {
  return graph_from_weights(read_weight_file(path), options);
}

/// Container holding the graph's 13 conv layers under their VGG16 names.
template <class T>
WeightFile to_weight_file(const NetworkGraph<T>& g) {
  WeightFile file;
  const auto names = vgg16_conv_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& c = g.convs()[i];
    file.records.push_back({names[i] + ".weight",
                            {static_cast<std::uint32_t>(c.out_channels), static_cast<std::uint32_t>(c.in_channels),
                             3, 3},
                            std::vector<float>(c.weights.begin(), c.weights.end())});
    file.records.push_back({names[i] + ".bias",
                            {static_cast<std::uint32_t>(c.out_channels)},
                            std::vector<float>(c.bias.begin(), c.bias.end())});
  }
  return file;
}

/// He-initialized network with the VGG16 layer structure and arbitrary block widths.
template <class T = float>
NetworkGraph<T> random_graph(std::uint64_t seed, std::array<int, kTapCount> widths = kVgg16Widths,
                             BackboneOptions options = {}) {
  std::mt19937_64 rng(seed);
  std::vector<ConvSpec<T>> convs;
  int in = 3;
  for (int b = 0; b < kTapCount; ++b) {
    for (int l = 0; l < kConvsPerBlock[b]; ++l) {
      ConvSpec<T> c{in, widths[b], 3, 1, 1, {}, {}};
      std::normal_distribution<double> w(0.0, std::sqrt(2.0 / (in * 9)));
      std::normal_distribution<double> bias(0.0, 0.01);
      c.weights.resize(c.weight_count());
      for (auto& v : c.weights) v = static_cast<T>(w(rng));
      c.bias.resize(widths[b]);
      for (auto& v : c.bias) v = static_cast<T>(bias(rng));
      convs.push_back(std::move(c));
      in = widths[b];
    }
  }
  return NetworkGraph<T>(widths, std::move(convs), options);
}

template <class T>
Tensor3<T> standardize(const Tensor3<T>& im) {
  require_rgb(im, "standardize");
  std::vector<T> scale(3), shift(3);
  for (int c = 0; c < 3; ++c) {
    scale[c] = static_cast<T>(1.0 / kImageNetStd[c]);
    shift[c] = static_cast<T>(-kImageNetMean[c] / kImageNetStd[c]);
  }
  return channel_affine<T>(im, scale, shift);
}

/// Rescale so the smaller side is `min_side` (<= 0 keeps the size), then standardize.
template <class T>
Tensor3<T> preprocess(const Tensor3<T>& image, int min_side = 256) {
  require_rgb(image, "preprocess");
  return standardize(rescale_min_side(image, min_side));
}

/// Six-stage representation; stage 0 holds the pixels, stages 1-5 the tap responses.
template <class T = float>
struct FeatureStack {
  std::array<Tensor3<T>, kStageCount> stages;
  /// Tape variables of each stage when the extraction was recorded.
  std::array<int, kStageCount> vars{-1, -1, -1, -1, -1, -1};

  int total_channels() const {
    int n = 0;
    for (const auto& s : stages) n += s.channels();
    return n;
  }
  std::array<int, kStageCount> stage_channels() const {
    std::array<int, kStageCount> n{};
    for (int i = 0; i < kStageCount; ++i) n[i] = stages[i].channels();
    return n;
  }
};

/// Runs the network on an RGB image in [0, 1] at working resolution.
///
/// Standardization happens inside, so stage 0 is the caller's pixels
/// bit-for-bit. With a tape, the computation is recorded starting from the
/// pixels and the stack carries the tape variable of each stage. Stages after
/// `last_stage` are left empty and not computed.
template <class T>
FeatureStack<T> extract_features(const NetworkGraph<T>& graph, const Tensor3<T>& pixels,
                                 std::type_identity_t<Tape<T>>* tape = nullptr,
                                 int last_stage = kStageCount - 1) {
  require_rgb(pixels, "extract_features");
  const int last_layer = last_stage >= 1 ? graph.taps()[std::min(last_stage, kTapCount) - 1] : -1;
  FeatureStack<T> fs;
  const bool stage0 = graph.options().include_stage0;
  std::vector<T> scale(3), shift(3);
  for (int c = 0; c < 3; ++c) {
    scale[c] = static_cast<T>(1.0 / kImageNetStd[c]);
    shift[c] = static_cast<T>(-kImageNetMean[c] / kImageNetStd[c]);
  }

  if (tape) {
    int v = tape->input(pixels);
    if (stage0) {
      fs.stages[0] = pixels;
      fs.vars[0] = v;
    }
    v = tape->channel_affine(v, scale, shift);
    std::size_t next_tap = 0;
    for (int i = 0; i <= last_layer; ++i) {
      const auto& layer = graph.layers()[i];
      switch (layer.kind) {
        case NetworkGraph<T>::LayerKind::conv:
          v = tape->conv2d(v, graph.convs()[layer.conv_index]);
          break;
        case NetworkGraph<T>::LayerKind::relu:
          v = tape->relu(v);
          break;
        case NetworkGraph<T>::LayerKind::pool:
          v = graph.options().pooling == PoolingKind::l2 ? tape->l2pool(v, graph.pool()) : tape->max_pool(v);
          break;
      }
      if (next_tap < graph.taps().size() && graph.taps()[next_tap] == i) {
        fs.stages[next_tap + 1] = tape->value(v);
        fs.vars[next_tap + 1] = v;
        ++next_tap;
      }
    }
    return fs;
  }

  if (stage0) fs.stages[0] = pixels;
  Tensor3<T> x = channel_affine<T>(pixels, scale, shift);
  std::size_t next_tap = 0;
  for (int i = 0; i <= last_layer; ++i) {
    const auto& layer = graph.layers()[i];
    switch (layer.kind) {
      case NetworkGraph<T>::LayerKind::conv:
        x = conv2d(x, graph.convs()[layer.conv_index]);
        break;
      case NetworkGraph<T>::LayerKind::relu:
        x = relu(x);
        break;
      case NetworkGraph<T>::LayerKind::pool:
        x = graph.options().pooling == PoolingKind::l2 ? l2pool(x, graph.pool()) : max_pool(x);
        break;
    }
    if (next_tap < graph.taps().size() && graph.taps()[next_tap] == i) {
      fs.stages[next_tap + 1] = x;
      ++next_tap;
    }
  }
  return fs;
}

}  // namespace dists
