#pragma once

// CSV manifests: quality rows (ref_path, dist_path, mos[, dataset]) and
// texture lists (path). Relative paths resolve against the manifest's folder.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dists/errors.hpp"

namespace dists {

struct QualityRow {
  std::filesystem::path ref_path;
  std::filesystem::path dist_path;
  double mos = 0;
  std::string dataset;
  int line = 0;
};

struct ManifestIssue {
  int line = 0;
  std::string message;
};

struct QualityManifest {
  std::vector<QualityRow> rows;
  std::vector<ManifestIssue> issues;
};

/// Splits one CSV record. Fields may be double-quoted; "" inside quotes is a quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot open manifest " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) lines.push_back(line);
  return lines;
}

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline std::string format_issues(const std::vector<ManifestIssue>& issues) {
  std::ostringstream os;
  for (const auto& i : issues) os << "  line " << i.line << ": " << i.message << "\n";
  return os.str();
}

/// Reads a quality manifest. Malformed rows are collected in `issues`; unless
/// `skip_bad` is set, any issue aborts with an IngestionError listing them all.
/// With `check_files`, rows whose images do not exist count as malformed.
inline QualityManifest read_quality_manifest(const std::filesystem::path& path, bool skip_bad = false,
                                             bool check_files = true) {
  const auto lines = detail::read_lines(path);
  const auto base = path.parent_path();
  QualityManifest m;
  std::size_t first = 0;
  while (first < lines.size() && detail::blank(lines[first])) ++first;
  if (first == lines.size()) throw IngestionError("manifest " + path.string() + " is empty");
  const auto header = split_csv_line(lines[first]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"ref_path", "dist_path", "mos"})
    if (!col.contains(need))
      throw IngestionError("manifest " + path.string() + " lacks a '" + need + "' column");
  const bool has_dataset = col.contains("dataset");
  const std::string default_dataset = path.stem().string();

  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (detail::blank(lines[li])) continue;
    const int lineno = static_cast<int>(li) + 1;
    const auto f = split_csv_line(lines[li]);
    if (f.size() != header.size()) {
      m.issues.push_back({lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(f.size())});
      continue;
    }
    QualityRow row;
    row.line = lineno;
    row.ref_path = detail::resolve(base, f[col["ref_path"]]);
    row.dist_path = detail::resolve(base, f[col["dist_path"]]);
    row.dataset = has_dataset && !f[col["dataset"]].empty() ? f[col["dataset"]] : default_dataset;
    if (!parse_double(f[col["mos"]], row.mos)) {
      m.issues.push_back({lineno, "score '" + f[col["mos"]] + "' is not a finite number"});
      continue;
    }
    if (f[col["ref_path"]].empty() || f[col["dist_path"]].empty()) {
      m.issues.push_back({lineno, "empty image path"});
      continue;
    }
    if (check_files) {
      if (!std::filesystem::exists(row.ref_path)) {
        m.issues.push_back({lineno, "missing file " + row.ref_path.string()});
        continue;
      }
      if (!std::filesystem::exists(row.dist_path)) {
        m.issues.push_back({lineno, "missing file " + row.dist_path.string()});
        continue;
      }
    }
    m.rows.push_back(std::move(row));
  }
  if (!m.issues.empty() && !skip_bad)
    throw IngestionError("malformed rows in " + path.string() + ":\n" + format_issues(m.issues));
  if (m.rows.empty()) throw IngestionError("manifest " + path.string() + " has no usable rows");
  return m;
}

inline void write_quality_manifest(const std::filesystem::path& path, const std::vector<QualityRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IngestionError("cannot write manifest " + path.string());
  f.precision(std::numeric_limits<double>::max_digits10);
  f << "ref_path,dist_path,mos,dataset\n";
  for (const auto& r : rows)
    f << csv_field(r.ref_path.string()) << "," << csv_field(r.dist_path.string()) << "," << r.mos << ","
      << csv_field(r.dataset) << "\n";
}

/// One texture image per row, header "path". A headerless list is accepted too.
inline std::vector<std::filesystem::path> read_texture_manifest(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  const auto base = path.parent_path();
  std::vector<std::filesystem::path> out;
  bool first = true;
  for (const auto& line : lines) {
    if (detail::blank(line)) continue;
    const auto f = split_csv_line(line);
    if (first) {
      first = false;
      if (f[0] == "path") continue;
    }
    const auto p = detail::resolve(base, f[0]);
    if (!std::filesystem::exists(p)) throw IngestionError("missing texture " + p.string());
    out.push_back(p);
  }
  if (out.empty()) throw IngestionError("texture manifest " + path.string() + " lists no images");
  return out;
}

/// Maps scores linearly onto [0, 1]. With `higher_is_better` the orientation
/// is inverted, so that the best image gets 0 like a distance.
inline std::vector<double> normalize_scores(const std::vector<double>& mos, bool higher_is_better = true) {
  if (mos.empty()) return {};
  const auto [lo, hi] = std::minmax_element(mos.begin(), mos.end());
  const double range = *hi - *lo;
  if (!(range > 0)) throw IngestionError("scores are constant; cannot normalize");
  std::vector<double> q(mos.size());
  for (std::size_t i = 0; i < mos.size(); ++i) {
    const double t = (mos[i] - *lo) / range;
    q[i] = higher_is_better ? 1.0 - t : t;
  }
  return q;
}

}  // namespace dists
