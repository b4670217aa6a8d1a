#pragma once

// NSD container (little-endian):
//   "NSD1" | u32 num_examples | u32 layer_count | u32 layer_width | u32 num_classes
//   | u8 name_len, name | u8 tag_len, task_tag
//   | num_examples * N float32, row-major | num_examples * u16 labels

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "neurosel/core.hpp"

namespace neurosel {

inline constexpr std::array<char, 4> kNsdMagic = {'N', 'S', 'D', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFFu));
  out.push_back(static_cast<char>((v >> 8) & 0xFFu));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++]) << (8 * i));
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    require(remaining() >= n, ErrorCode::DimensionMismatch, "file truncated inside header");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

}  // namespace detail

inline std::string encode_nsd(const EmbeddingDataset& ds) {
  validate(ds);
  require(ds.name.size() <= 255 && ds.task_tag.size() <= 255, ErrorCode::ConfigError,
          "name and task tag must be at most 255 bytes");
  require(num_classes(ds) <= 65536, ErrorCode::LabelError, "too many classes for u16 labels");
  std::string out;
  out.reserve(4 + 16 + 2 + ds.name.size() + ds.task_tag.size() + ds.X.data().size() * 4 + ds.y.size() * 2);
  out.append(kNsdMagic.data(), kNsdMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(ds.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.layer_map.layer_count));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.layer_map.layer_width));
  detail::put_u32(out, static_cast<std::uint32_t>(num_classes(ds)));
  out.push_back(static_cast<char>(ds.name.size()));
  out += ds.name;
  out.push_back(static_cast<char>(ds.task_tag.size()));
  out += ds.task_tag;
  for (float v : ds.X.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  for (Label l : ds.y) detail::put_u16(out, l);
  return out;
}

inline EmbeddingDataset decode_nsd(std::string_view bytes) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kNsdMagic.data(), 4) == 0, ErrorCode::MagicMismatch,
          "missing NSD1 magic");
  detail::ByteReader reader(bytes.substr(4));
  const std::uint32_t rows = reader.u32();
  const std::uint32_t layer_count = reader.u32();
  const std::uint32_t layer_width = reader.u32();
  const std::uint32_t header_classes = reader.u32();
  EmbeddingDataset ds;
  ds.name = std::string(reader.take(reader.u8()));
  ds.task_tag = std::string(reader.take(reader.u8()));
  require(rows > 0, ErrorCode::EmptyDataset, "file declares zero examples");
  require(layer_count > 0 && layer_width > 0, ErrorCode::DimensionMismatch, "layer geometry must be positive");
  ds.layer_map = LayerMap{layer_count, layer_width};

  const std::uint64_t cols = std::uint64_t{layer_count} * layer_width;
  const std::uint64_t expected = std::uint64_t{rows} * cols * 4 + std::uint64_t{rows} * 2;
  require(reader.remaining() == expected, ErrorCode::DimensionMismatch,
          "header declares " + std::to_string(rows) + " x " + std::to_string(cols) + " (" + std::to_string(expected) +
              " payload bytes) but file holds " + std::to_string(reader.remaining()));

  std::vector<float> data(static_cast<std::size_t>(rows * cols));
  for (auto& v : data) v = std::bit_cast<float>(reader.u32());
  ds.X = Matrix<float>(rows, static_cast<std::size_t>(cols), std::move(data));
  ds.y.resize(rows);
  for (auto& l : ds.y) l = reader.u16();

  validate_finite(ds.X);
  validate_labels(ds.y);
  require(num_classes(ds) == header_classes, ErrorCode::LabelError,
          "header declares " + std::to_string(header_classes) + " classes, labels span " +
              std::to_string(num_classes(ds)));
  return ds;
}

inline EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  return decode_nsd(detail::read_file(path));
}

inline void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  detail::write_file(path, encode_nsd(ds));
}

// CSV debug format: header "label,n0,n1,...", one example per line.
inline EmbeddingDataset read_csv_dataset(const std::filesystem::path& path, std::optional<LayerMap> geometry,
                                         std::string name, std::string task_tag) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::DimensionMismatch, "CSV has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("label", 0) == 0, ErrorCode::MagicMismatch, "CSV header must start with 'label'");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  require(cols > 0, ErrorCode::DimensionMismatch, "CSV header has no feature columns");
  const LayerMap map = geometry.value_or(LayerMap{1, cols});
  require(map.total() == cols, ErrorCode::DimensionMismatch,
          "geometry " + std::to_string(map.layer_count) + "x" + std::to_string(map.layer_width) + " != " +
              std::to_string(cols) + " CSV columns");

  std::vector<float> data;
  std::vector<Label> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    std::size_t field = 0;
    while (true) {
      const char* comma = std::find(p, end, ',');
      if (field == 0) {
        unsigned long label = 0;
        const auto [ptr, ec] = std::from_chars(p, comma, label);
        require(ec == std::errc{} && ptr == comma && label <= 65535, ErrorCode::LabelError,
                "bad label on line " + std::to_string(line_no));
        labels.push_back(static_cast<Label>(label));
      } else {
        float value = 0.0f;
        const auto [ptr, ec] = std::from_chars(p, comma, value);
        require(ec == std::errc{} && ptr == comma, ErrorCode::NonFiniteActivation,
                "unparseable value on line " + std::to_string(line_no) + ", column " + std::to_string(field));
        data.push_back(value);
      }
      ++field;
      if (comma == end) break;
      p = comma + 1;
    }
    require(field == cols + 1, ErrorCode::DimensionMismatch,
            "line " + std::to_string(line_no) + " has " + std::to_string(field) + " fields, expected " +
                std::to_string(cols + 1));
  }
  EmbeddingDataset ds{std::move(name), std::move(task_tag), map, Matrix<float>(labels.size(), cols, std::move(data)),
                      std::move(labels)};
  validate(ds);
  return ds;
}

inline void write_csv_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  validate(ds);
  std::string out = "label";
  for (std::size_t c = 0; c < ds.cols(); ++c) out += ",n" + std::to_string(c);
  out += '\n';
  std::array<char, 32> buf;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    out += std::to_string(ds.y[r]);
    for (float v : ds.X.row(r)) {
      // shortest representation that round-trips the float exactly
      const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out += ',';
      out.append(buf.data(), ptr);
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

}  // namespace neurosel
