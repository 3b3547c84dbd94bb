#pragma once

// "DWTS" parameter container.
//
//   magic   4 bytes  "DWTS"
//   version u32      1
//   count   u32      number of records
//   record  u16 name length, UTF-8 name, u8 rank, u32 dims[rank],
//           prod(dims) IEEE-754 binary32 values, row-major
//
// All integers and floats are little-endian. The same container carries the
// backbone convolution parameters and the trained alpha/beta weights.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "dists/errors.hpp"

namespace dists {

inline constexpr char kWeightMagic[4] = {'D', 'W', 'T', 'S'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct WeightRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }
  friend bool operator==(const WeightRecord&, const WeightRecord&) = default;
};

struct WeightFile {
  std::uint32_t version = kWeightVersion;
  std::vector<WeightRecord> records;

  const WeightRecord* find(std::string_view name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
  friend bool operator==(const WeightFile&, const WeightFile&) = default;
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U read(const char* what) {
    if (bytes_.size() - pos_ < sizeof(U))
      throw IncompatibleWeightsError(std::string("weight file truncated while reading ") + what);
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    U out;
    std::memcpy(&out, raw, sizeof(U));
    return out;
  }

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw IncompatibleWeightsError(std::string("weight file truncated while reading ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <class U>
void put(std::string& out, U v) {
  char raw[sizeof(U)];
  std::memcpy(raw, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
  out.append(raw, sizeof(U));
}

}  // namespace detail

inline WeightFile parse_weight_file(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0)
    throw FormatError("not a DWTS weight file (bad magic)");
  in.take(4, "magic");
  WeightFile file;
  if (bytes.size() < 8) throw FormatError("weight file header truncated");
  file.version = in.read<std::uint32_t>("version");
  if (file.version != kWeightVersion)
    throw FormatError("unsupported weight file version " + std::to_string(file.version));
  const auto count = in.read<std::uint32_t>("record count");
  for (std::uint32_t r = 0; r < count; ++r) {
    WeightRecord rec;
    const auto name_len = in.read<std::uint16_t>("record name length");
    rec.name = std::string(in.take(name_len, "record name"));
    const auto rank = in.read<std::uint8_t>("record rank");
    for (int d = 0; d < rank; ++d) rec.dims.push_back(in.read<std::uint32_t>("record dims"));
    const std::size_t n = rec.element_count();
    if (n > in.remaining() / 4)
      throw IncompatibleWeightsError("weight file truncated inside record '" + rec.name + "'");
    rec.values.resize(n);
    for (auto& v : rec.values) v = in.read<float>("record values");
    file.records.push_back(std::move(rec));
  }
  if (in.remaining() != 0)
    throw IncompatibleWeightsError("weight file has " + std::to_string(in.remaining()) +
                                   " trailing bytes after the declared records");
  return file;
}

inline std::string serialize_weight_file(const WeightFile& file) {
  std::string out(kWeightMagic, 4);
  detail::put<std::uint32_t>(out, file.version);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(file.records.size()));
  for (const auto& rec : file.records) {
    if (rec.values.size() != rec.element_count())
      throw ShapeError("record '" + rec.name + "' value count does not match its dims");
    if (rec.name.size() > 0xFFFF || rec.dims.size() > 0xFF) throw ShapeError("record header too large");
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(rec.name.size()));
    out += rec.name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) detail::put<std::uint32_t>(out, d);
    for (float v : rec.values) detail::put<float>(out, v);
  }
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline WeightFile read_weight_file(const std::filesystem::path& path) {
  return parse_weight_file(read_file_bytes(path));
}

inline void write_weight_file(const std::filesystem::path& path, const WeightFile& file) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestionError("cannot write " + path.string());
  const auto bytes = serialize_weight_file(file);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IngestionError("short write to " + path.string());
}

}  // namespace dists
