#pragma once

// Parity fixtures written by the weight exporter. A fixture directory holds:
//
//   image_x.png        test image x (also the reference of the pair)
//   image_y.png        second image of the pair
//   stage_means.csv    stage,channel,mean   channel means of x, all six stages
//   pair_ls.csv        stage,channel,l,s    per-channel similarities of (x, y)
//   pair_d.csv         d                    D(x, y) under uniform weights
//
// Values are computed at the images' stored size (no rescaling), with the
// l2-pooled network and 5x5 unit-sum Hanning window.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dists/errors.hpp"
#include "dists/manifest.hpp"

namespace dists {

struct StageValue {
  int stage = 0;
  int channel = 0;
  double value = 0;
};

struct ChannelPairValue {
  int stage = 0;
  int channel = 0;
  double l = 0, s = 0;
};

struct FixtureBundle {
  std::filesystem::path image_x;
  std::filesystem::path image_y;
  std::vector<StageValue> stage_means;
  std::vector<ChannelPairValue> pair_ls;
  double d_uniform = 0;
};

namespace detail {

/// Rows of a headered numeric CSV, checked against the expected column names.
inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                         const std::vector<std::string>& columns) {
  const auto lines = read_lines(path);
  std::vector<std::vector<double>> rows;
  bool header = true;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (blank(lines[li])) continue;
    const auto f = split_csv_line(lines[li]);
    if (header) {
      if (f != columns) throw FormatError(path.string() + ": unexpected header");
      header = false;
      continue;
    }
    if (f.size() != columns.size())
      throw FormatError(path.string() + ": wrong field count on line " + std::to_string(li + 1));
    std::vector<double> row(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      if (!parse_double(f[i], row[i]))
        throw FormatError(path.string() + ": bad number on line " + std::to_string(li + 1));
    rows.push_back(std::move(row));
  }
  if (header) throw FormatError(path.string() + ": missing header");
  return rows;
}

inline std::filesystem::path find_image(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {".png", ".ppm", ".jpg"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IngestionError("fixture directory lacks " + stem + " image");
}

}  // namespace detail

/// True when `dir` contains every fixture file.
inline bool fixtures_present(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (dir.empty() || !fs::is_directory(dir)) return false;
  for (const char* f : {"stage_means.csv", "pair_ls.csv", "pair_d.csv"})
    if (!fs::exists(dir / f)) return false;
  return true;
}

inline FixtureBundle load_fixtures(const std::filesystem::path& dir) {
  FixtureBundle b;
  b.image_x = detail::find_image(dir, "image_x");
  b.image_y = detail::find_image(dir, "image_y");
  for (const auto& r : detail::read_numeric_csv(dir / "stage_means.csv", {"stage", "channel", "mean"}))
    b.stage_means.push_back({static_cast<int>(r[0]), static_cast<int>(r[1]), r[2]});
  for (const auto& r : detail::read_numeric_csv(dir / "pair_ls.csv", {"stage", "channel", "l", "s"}))
    b.pair_ls.push_back({static_cast<int>(r[0]), static_cast<int>(r[1]), r[2], r[3]});
  const auto d = detail::read_numeric_csv(dir / "pair_d.csv", {"d"});
  if (d.size() != 1) throw FormatError("pair_d.csv must hold exactly one value");
  b.d_uniform = d[0][0];
  return b;
}

}  // namespace dists
