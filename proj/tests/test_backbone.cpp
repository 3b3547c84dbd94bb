#include <gtest/gtest.h>

#include <filesystem>

#include "dists/backbone.hpp"
#include "oracles.hpp"

using dists::Image;

namespace {

const dists::NetworkGraph<float>& vgg() {
  static const auto g = dists::random_graph<float>(7);
  return g;
}

}  // namespace

TEST(Backbone, Vgg16Topology) {
  const auto& g = vgg();
  EXPECT_EQ(g.convs().size(), 13u);
  const auto n = g.stage_channels();
  EXPECT_EQ(n, (std::array<int, 6>{3, 64, 128, 256, 512, 512}));
  EXPECT_EQ(g.total_channels(), 1475);
  int pools = 0;
  for (int i = 0; i <= g.taps().back(); ++i) pools += g.layers()[i].kind == dists::NetworkGraph<float>::LayerKind::pool;
  EXPECT_EQ(pools, 4);
  const auto names = dists::vgg16_conv_names();
  EXPECT_EQ(names.front(), "conv1_1");
  EXPECT_EQ(names[1], "conv1_2");
  EXPECT_EQ(names[3], "conv2_2");
  EXPECT_EQ(names[6], "conv3_3");
  EXPECT_EQ(names[9], "conv4_3");
  EXPECT_EQ(names.back(), "conv5_3");
  // Each tap is the ReLU right after the named conv.
  const std::array<int, 5> tap_conv = {1, 3, 6, 9, 12};
  for (int t = 0; t < 5; ++t) {
    const int layer = g.taps()[t];
    EXPECT_EQ(g.layers()[layer].kind, dists::NetworkGraph<float>::LayerKind::relu);
    EXPECT_EQ(g.layers()[layer - 1].conv_index, tap_conv[t]);
  }
}

TEST(Backbone, FeatureStackShapes) {
  const Image x = oracle::random_tensor<float>(3, 32, 32, 1, 0.0, 1.0);
  const auto fs = dists::extract_features(vgg(), x);
  EXPECT_EQ(fs.total_channels(), 1475);
  EXPECT_EQ(fs.stages[0], x);
  const std::array<int, 6> side = {32, 32, 16, 8, 4, 2};
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(fs.stages[i].height(), side[i]) << i;
    EXPECT_EQ(fs.stages[i].width(), side[i]) << i;
  }
  for (int i = 1; i < 6; ++i)
    for (float v : fs.stages[i].values()) ASSERT_GE(v, 0.0f);
}

TEST(Backbone, ExtractionIsDeterministicAndTapeAgrees) {
  const Image x = oracle::random_tensor<float>(3, 24, 20, 2, 0.0, 1.0);
  const auto a = dists::extract_features(vgg(), x);
  const auto b = dists::extract_features(vgg(), x);
  dists::Tape<float> tape;
  const auto c = dists::extract_features(vgg(), x, &tape);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(a.stages[i], b.stages[i]);
    EXPECT_EQ(a.stages[i], c.stages[i]);
    EXPECT_GE(c.vars[i], 0);
  }
}

TEST(Backbone, LastStageStopsEarly) {
  const Image x = oracle::random_tensor<float>(3, 16, 16, 3, 0.0, 1.0);
  const auto full = dists::extract_features(vgg(), x);
  const auto part = dists::extract_features(vgg(), x, nullptr, 2);
  for (int i = 0; i <= 2; ++i) EXPECT_EQ(full.stages[i], part.stages[i]);
  EXPECT_TRUE(part.stages[3].empty());
  const auto only0 = dists::extract_features(vgg(), x, nullptr, 0);
  EXPECT_EQ(only0.stages[0], x);
  EXPECT_TRUE(only0.stages[1].empty());
}

TEST(Backbone, Stage0CanBeExcluded) {
  const auto g = vgg().with_options({dists::PoolingKind::l2, false});
  EXPECT_EQ(g.total_channels(), 1472);
  const auto fs = dists::extract_features(g, oracle::random_tensor<float>(3, 16, 16, 4, 0.0, 1.0));
  EXPECT_TRUE(fs.stages[0].empty());
  EXPECT_EQ(fs.total_channels(), 1472);
}

TEST(Backbone, MaxPoolingAblationKeepsShapes) {
  const auto g = vgg().with_options({dists::PoolingKind::max, true});
  const auto fs = dists::extract_features(g, oracle::random_tensor<float>(3, 32, 32, 5, 0.0, 1.0));
  EXPECT_EQ(fs.stages[5].height(), 2);
  EXPECT_EQ(fs.total_channels(), 1475);
}

TEST(Backbone, StandardizeUsesImageNetStatistics) {
  Image x(3, 1, 1);
  x(0, 0, 0) = 0.485f, x(1, 0, 0) = 0.456f + 0.224f, x(2, 0, 0) = 0.0f;
  const auto s = dists::standardize(x);
  EXPECT_NEAR(s(0, 0, 0), 0.0, 1e-6);
  EXPECT_NEAR(s(1, 0, 0), 1.0, 1e-6);
  EXPECT_NEAR(s(2, 0, 0), -0.406 / 0.225, 1e-6);
}

TEST(Backbone, PreprocessRescalesTheShortSide) {
  const Image x = oracle::random_tensor<float>(3, 40, 60, 6, 0.0, 1.0);
  const auto p = dists::preprocess(x, 20);
  EXPECT_EQ(p.height(), 20);
  EXPECT_EQ(p.width(), 30);
  EXPECT_EQ(dists::preprocess(x, 0).height(), 40);
}

TEST(Backbone, WeightFileRoundTrip) {
  const auto file = dists::to_weight_file(vgg());
  const auto g = dists::graph_from_weights(dists::parse_weight_file(dists::serialize_weight_file(file)));
  ASSERT_EQ(g.convs().size(), 13u);
  for (std::size_t i = 0; i < 13; ++i) {
    EXPECT_EQ(g.convs()[i].weights, vgg().convs()[i].weights);
    EXPECT_EQ(g.convs()[i].bias, vgg().convs()[i].bias);
  }
  const auto path = std::filesystem::temp_directory_path() / "dists_backbone_test.dwts";
  dists::write_weight_file(path, file);
  const auto loaded = dists::load_weights(path);
  const Image x = oracle::random_tensor<float>(3, 16, 16, 7, 0.0, 1.0);
  EXPECT_EQ(dists::extract_features(loaded, x).stages[5], dists::extract_features(vgg(), x).stages[5]);
  std::filesystem::remove(path);
}

TEST(Backbone, Conv11ShapeIsChecked) {
  auto file = dists::to_weight_file(vgg());
  EXPECT_EQ(file.records[0].dims, (std::vector<std::uint32_t>{64, 3, 3, 3}));
  EXPECT_NO_THROW(dists::graph_from_weights(file));
  file.records[0].dims = {64, 3, 1, 9};
  try {
    dists::graph_from_weights(file);
    FAIL() << "expected an incompatible-weights error";
  } catch (const dists::IncompatibleWeightsError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1_1"), std::string::npos);
  }
}

TEST(Backbone, MissingLayerIsNamed) {
  auto file = dists::to_weight_file(vgg());
  file.records.erase(file.records.begin() + 16);
  try {
    dists::graph_from_weights(file);
    FAIL();
  } catch (const dists::IncompatibleWeightsError& e) {
    EXPECT_NE(std::string(e.what()).find("conv4_2"), std::string::npos) << e.what();
  }
}

TEST(Backbone, NarrowGraphsKeepTheStructure) {
  const auto g = dists::random_graph<float>(1, {4, 8, 8, 16, 16});
  EXPECT_EQ(g.total_channels(), 3 + 4 + 8 + 8 + 16 + 16);
  const auto fs = dists::extract_features(g, oracle::random_tensor<float>(3, 16, 16, 8, 0.0, 1.0));
  EXPECT_EQ(fs.stages[5].channels(), 16);
}

TEST(Backbone, NonRgbInputIsRejected) {
  EXPECT_THROW(dists::extract_features(vgg(), Image(1, 8, 8)), dists::ShapeError);
}
