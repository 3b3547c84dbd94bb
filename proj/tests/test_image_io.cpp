#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dists/image_io.hpp"
#include "dists/metric.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("dists_io_" + name); }

dists::Image sample(int h, int w) { return dists::quantize8(oracle::random_tensor<float>(3, h, w, 11, 0, 1)); }

}  // namespace

TEST(ImageIo, QuantizeIsIdempotentAndClamps) {
  dists::Image x(3, 1, 2);
  x(0, 0, 0) = -0.5f, x(1, 0, 0) = 1.5f, x(2, 0, 1) = 0.5f;
  const auto q = dists::quantize8(x);
  EXPECT_EQ(q(0, 0, 0), 0.0f);
  EXPECT_EQ(q(1, 0, 0), 1.0f);
  EXPECT_EQ(q(2, 0, 1), 128.0f / 255.0f);
  EXPECT_EQ(dists::quantize8(q), q);
}

TEST(ImageIo, LosslessRoundTrips) {
  const auto x = sample(13, 17);
  for (const char* ext : {".png", ".ppm"}) {
    const auto p = temp(std::string("lossless") + ext);
    dists::write_image(p, x);
    const auto y = dists::read_image(p);
    EXPECT_EQ(y, x) << ext;
    fs::remove(p);
  }
}

TEST(ImageIo, JpegRoundTripIsClose) {
  dists::Image x(3, 32, 32);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) x(c, i, j) = (i + j + 10 * c) / 100.0f;
  const auto p = temp("lossy.jpg");
  dists::write_image(p, x, 95);
  const auto y = dists::read_image(p);
  ASSERT_EQ(y.height(), 32);
  EXPECT_LT(dists::mse(x, y), 1e-4);
  fs::remove(p);
}

TEST(ImageIo, GrayscalePgmBecomesRgb) {
  const auto p = temp("gray.pgm");
  {
    std::ofstream f(p, std::ios::binary);
    f << "P5\n# comment\n2 1\n255\n";
    f.put(static_cast<char>(0)).put(static_cast<char>(255));
  }
  const auto y = dists::read_image(p);
  ASSERT_EQ(y.channels(), 3);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(y(c, 0, 0), 0.0f);
    EXPECT_EQ(y(c, 0, 1), 1.0f);
  }
  fs::remove(p);
}

TEST(ImageIo, FailuresAreIngestionErrors) {
  EXPECT_THROW(dists::read_image(temp("absent.png")), dists::IngestionError);
  const auto p = temp("garbage.png");
  std::ofstream(p) << "not a png";
  EXPECT_THROW(dists::read_image(p), dists::IngestionError);
  const auto j = temp("garbage.jpg");
  std::ofstream(j) << "not a jpeg";
  EXPECT_THROW(dists::read_image(j), dists::IngestionError);
  EXPECT_THROW(dists::read_image(temp("x.bmp")), dists::IngestionError);
  EXPECT_THROW(dists::write_image(temp("x.tiff"), sample(2, 2)), dists::IngestionError);
  fs::remove(p);
  fs::remove(j);
}
