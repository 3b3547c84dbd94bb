#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "dists/manifest.hpp"

namespace fs = std::filesystem;

namespace {

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dists_manifest_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_ / "img");
    for (const char* n : {"a.png", "b.png", "c.png"}) std::ofstream(dir_ / "img" / n) << "x";
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST(Csv, SplitsQuotedFields) {
  EXPECT_EQ(dists::split_csv_line("a,b,c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(dists::split_csv_line("\"a,b\",\"say \"\"hi\"\"\",\r"), (std::vector<std::string>{"a,b", "say \"hi\"", ""}));
  EXPECT_EQ(dists::csv_field("plain"), "plain");
  EXPECT_EQ(dists::split_csv_line(dists::csv_field("x,\"y\"")), (std::vector<std::string>{"x,\"y\""}));
  double v = 0;
  EXPECT_TRUE(dists::parse_double("2.5", v));
  EXPECT_EQ(v, 2.5);
  for (const char* bad : {"", "abc", "1.0x", "nan", "inf"}) EXPECT_FALSE(dists::parse_double(bad, v)) << bad;
}

TEST_F(ManifestTest, ReadsRowsAndResolvesPaths) {
  const auto p = write("live.csv",
                       "ref_path,dist_path,mos\n"
                       "img/a.png,img/b.png,71.5\n"
                       "\n"
                       "img/a.png,img/c.png,20\n");
  const auto m = dists::read_quality_manifest(p);
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_EQ(m.rows[0].ref_path, dir_ / "img/a.png");
  EXPECT_EQ(m.rows[1].dist_path, dir_ / "img/c.png");
  EXPECT_EQ(m.rows[0].mos, 71.5);
  EXPECT_EQ(m.rows[0].dataset, "live");
  EXPECT_EQ(m.rows[1].line, 4);
  EXPECT_TRUE(m.issues.empty());
}

TEST_F(ManifestTest, DatasetColumnAndColumnOrder) {
  const auto p = write("m.csv", "mos,dataset,dist_path,ref_path\n3,tid,img/b.png,img/a.png\n4,,img/c.png,img/a.png\n");
  const auto m = dists::read_quality_manifest(p);
  EXPECT_EQ(m.rows[0].dataset, "tid");
  EXPECT_EQ(m.rows[1].dataset, "m");
  EXPECT_EQ(m.rows[0].dist_path, dir_ / "img/b.png");
}

TEST_F(ManifestTest, MalformedRowsAreListed) {
  const auto p = write("bad.csv",
                       "ref_path,dist_path,mos\n"
                       "img/a.png,img/b.png,1\n"
                       "img/a.png,img/b.png\n"
                       "img/a.png,img/b.png,high\n"
                       "img/a.png,img/missing.png,2\n");
  try {
    dists::read_quality_manifest(p);
    FAIL();
  } catch (const dists::IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing.png"), std::string::npos) << msg;
  }
  const auto m = dists::read_quality_manifest(p, true);
  EXPECT_EQ(m.rows.size(), 1u);
  EXPECT_EQ(m.issues.size(), 3u);
  EXPECT_EQ(dists::read_quality_manifest(p, true, false).rows.size(), 2u);
}

TEST_F(ManifestTest, StructuralProblemsThrow) {
  EXPECT_THROW(dists::read_quality_manifest(write("e.csv", "\n\n")), dists::IngestionError);
  EXPECT_THROW(dists::read_quality_manifest(write("h.csv", "ref,dist,mos\n")), dists::IngestionError);
  EXPECT_THROW(dists::read_quality_manifest(write("n.csv", "ref_path,dist_path,mos\nimg/a.png,img/b.png,x\n"), true),
               dists::IngestionError);
  EXPECT_THROW(dists::read_quality_manifest(dir_ / "absent.csv"), dists::IngestionError);
}

TEST_F(ManifestTest, WriteRoundTrip) {
  std::vector<dists::QualityRow> rows = {{dir_ / "img/a.png", dir_ / "img/b.png", 0.125, "set,one", 0},
                                         {dir_ / "img/a.png", dir_ / "img/c.png", 1.0 / 3, "two", 0}};
  const auto p = dir_ / "out.csv";
  dists::write_quality_manifest(p, rows);
  const auto m = dists::read_quality_manifest(p);
  ASSERT_EQ(m.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(m.rows[i].ref_path, rows[i].ref_path);
    EXPECT_EQ(m.rows[i].dist_path, rows[i].dist_path);
    EXPECT_EQ(m.rows[i].mos, rows[i].mos);
    EXPECT_EQ(m.rows[i].dataset, rows[i].dataset);
  }
}

TEST_F(ManifestTest, TextureManifest) {
  EXPECT_EQ(dists::read_texture_manifest(write("t.csv", "path\nimg/a.png\nimg/b.png\n")).size(), 2u);
  EXPECT_EQ(dists::read_texture_manifest(write("u.csv", "img/c.png\n")).front(), dir_ / "img/c.png");
  EXPECT_THROW(dists::read_texture_manifest(write("v.csv", "path\nimg/zzz.png\n")), dists::IngestionError);
  EXPECT_THROW(dists::read_texture_manifest(write("w.csv", "path\n")), dists::IngestionError);
}

TEST(Scores, NormalizeOrientation) {
  EXPECT_EQ(dists::normalize_scores({10, 20, 30}), (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(dists::normalize_scores({10, 20, 30}, false), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_THROW(dists::normalize_scores({4, 4}), dists::IngestionError);
  EXPECT_TRUE(dists::normalize_scores({}).empty());
}
