#include "bunet/mhd.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bunet/errors.hpp"

namespace bunet {

namespace fs = std::filesystem;

std::string_view to_string(ElementType t) {
  switch (t) {
    case ElementType::UInt8: return "MET_UCHAR";
    case ElementType::Int8: return "MET_CHAR";
    case ElementType::Int16: return "MET_SHORT";
    case ElementType::UInt16: return "MET_USHORT";
    case ElementType::Float32: return "MET_FLOAT";
  }
  return "?";
}

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::UInt8:
    case ElementType::Int8: return 1;
    case ElementType::Int16:
    case ElementType::UInt16: return 2;
    case ElementType::Float32: return 4;
  }
  return 0;
}

namespace {

constexpr std::size_t kMaxDim = 1u << 16;
constexpr std::size_t kMaxVoxels = std::size_t{1} << 32;

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view token) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw MhdParseError(std::string(key), "expected a non-negative integer, got '" + std::string(token) + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view token) {
  // std::from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw MhdParseError(std::string(key), "expected a number, got '" + std::string(token) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "True" || value == "true" || value == "TRUE" || value == "1") return true;
  if (value == "False" || value == "false" || value == "FALSE" || value == "0") return false;
  throw MhdParseError(std::string(key), "expected True or False, got '" + std::string(value) + "'");
}

ElementType parse_element_type(std::string_view value) {
  if (value == "MET_SHORT") return ElementType::Int16;
  if (value == "MET_USHORT") return ElementType::UInt16;
  if (value == "MET_FLOAT") return ElementType::Float32;
  if (value == "MET_UCHAR") return ElementType::UInt8;
  if (value == "MET_CHAR") return ElementType::Int8;
  throw MhdParseError("ElementType", "unsupported element type '" + std::string(value) + "'");
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MhdHeader parse_mhd(std::string_view text) {
  MhdHeader h;
  bool have_ndims = false;
  bool have_dims = false;
  bool have_type = false;
  bool have_file = false;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw MhdParseError(std::string(trim(line.substr(0, 40))), "line is not of the form 'Key = Value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw MhdParseError("<empty>", "missing key before '='");

    if (key == "NDims") {
      if (parse_count(key, value) != 3) throw MhdParseError("NDims", "only 3-dimensional volumes are supported");
      have_ndims = true;
    } else if (key == "DimSize") {
      const auto tok = split_ws(value);
      if (tok.size() != 3) throw MhdParseError("DimSize", "expected 3 values");
      std::array<std::size_t, 3> d{};
      for (int i = 0; i < 3; ++i) {
        d[i] = parse_count(key, tok[i]);
        if (d[i] == 0 || d[i] > kMaxDim) throw MhdParseError("DimSize", "dimension out of range");
      }
      if (d[0] * d[1] * d[2] > kMaxVoxels) throw MhdParseError("DimSize", "volume too large");
      h.width = d[0];
      h.height = d[1];
      h.depth = d[2];
      have_dims = true;
    } else if (key == "ElementType") {
      h.element_type = parse_element_type(value);
      have_type = true;
    } else if (key == "ElementSpacing") {
      const auto tok = split_ws(value);
      if (tok.size() != 3) throw MhdParseError("ElementSpacing", "expected 3 values");
      const double sx = parse_real(key, tok[0]);
      const double sy = parse_real(key, tok[1]);
      const double sz = parse_real(key, tok[2]);
      if (!(sx > 0 && sy > 0 && sz > 0)) throw MhdParseError("ElementSpacing", "spacing must be positive");
      h.spacing = {sz, sy, sx};
    } else if (key == "ElementDataFile") {
      if (value.empty()) throw MhdParseError("ElementDataFile", "empty file name");
      if (value == "LOCAL" || value == "LIST" || value.find('%') != std::string_view::npos) {
        throw MhdParseError("ElementDataFile", "only a single external data file is supported");
      }
      h.data_file = std::string(value);
      have_file = true;
    } else if (key == "ElementByteOrderMSB" || key == "BinaryDataByteOrderMSB") {
      h.msb = parse_bool(key, value);
    } else if (key == "CompressedData") {
      if (parse_bool(key, value)) throw MhdParseError("CompressedData", "compressed data is not supported");
    } else if (key == "ObjectType") {
      if (value != "Image") throw MhdParseError("ObjectType", "expected Image");
    } else if (key == "BinaryData") {
      if (!parse_bool(key, value)) throw MhdParseError("BinaryData", "ASCII data is not supported");
    } else if (key == "ElementNumberOfChannels") {
      if (parse_count(key, value) != 1) throw MhdParseError("ElementNumberOfChannels", "only scalar volumes");
    } else {
      h.extra.emplace_back(std::string(key), std::string(value));
    }
  }
  if (!have_ndims) throw MhdParseError("NDims", "missing required key");
  if (!have_dims) throw MhdParseError("DimSize", "missing required key");
  if (!have_type) throw MhdParseError("ElementType", "missing required key");
  if (!have_file) throw MhdParseError("ElementDataFile", "missing required key");
  return h;
}

std::string write_mhd(const MhdHeader& h) {
  std::ostringstream os;
  os << "ObjectType = Image\n";
  os << "NDims = 3\n";
  os << "BinaryData = True\n";
  os << "BinaryDataByteOrderMSB = " << (h.msb ? "True" : "False") << '\n';
  os << "CompressedData = False\n";
  for (const auto& [k, v] : h.extra) os << k << " = " << v << '\n';
  os << "ElementSpacing = " << format_real(h.spacing.x) << ' ' << format_real(h.spacing.y) << ' '
     << format_real(h.spacing.z) << '\n';
  os << "DimSize = " << h.width << ' ' << h.height << ' ' << h.depth << '\n';
  os << "ElementType = " << to_string(h.element_type) << '\n';
  os << "ElementDataFile = " << h.data_file << '\n';
  return os.str();
}

namespace {

template <typename Int>
Int load_int(const unsigned char* p, bool msb) {
  using U = std::make_unsigned_t<Int>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(Int); ++b) {
    const std::size_t shift = msb ? (sizeof(Int) - 1 - b) * 8 : b * 8;
    u = static_cast<U>(u | (static_cast<U>(p[b]) << shift));
  }
  return static_cast<Int>(u);
}

std::vector<float> decode(const MhdHeader& h, const std::string& raw) {
  const std::size_t n = h.voxel_count();
  std::vector<float> out(n);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t es = element_size(h.element_type);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* e = p + i * es;
    switch (h.element_type) {
      case ElementType::UInt8: out[i] = static_cast<float>(e[0]); break;
      case ElementType::Int8: out[i] = static_cast<float>(static_cast<std::int8_t>(e[0])); break;
      case ElementType::Int16: out[i] = static_cast<float>(load_int<std::int16_t>(e, h.msb)); break;
      case ElementType::UInt16: out[i] = static_cast<float>(load_int<std::uint16_t>(e, h.msb)); break;
      case ElementType::Float32: out[i] = std::bit_cast<float>(load_int<std::uint32_t>(e, h.msb)); break;
    }
  }
  return out;
}

std::pair<MhdHeader, std::vector<float>> read_volume(const fs::path& mhd_path) {
  const MhdHeader h = parse_mhd(read_file(mhd_path));
  const fs::path raw_path = mhd_path.parent_path() / h.data_file;
  const std::string raw = read_file(raw_path);
  const std::size_t expected = h.voxel_count() * element_size(h.element_type);
  if (raw.size() != expected) {
    throw DataError("corrupt file " + raw_path.string() + ": expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(raw.size()));
  }
  return {h, decode(h, raw)};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + p.string());
}

template <typename Int>
void store_le(std::string& buf, Int v) {
  using U = std::make_unsigned_t<Int>;
  const U u = static_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(Int); ++b) buf.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
}

}  // namespace

VolumeRecord load_volume(const fs::path& mhd_path) {
  auto [h, values] = read_volume(mhd_path);
  VolumeRecord r;
  r.case_id = mhd_path.stem().string();
  r.depth = h.depth;
  r.height = h.height;
  r.width = h.width;
  r.image = std::move(values);
  r.spacing = h.spacing;
  return r;
}

BinaryVolume load_mask(const fs::path& mhd_path) {
  auto [h, values] = read_volume(mhd_path);
  BinaryVolume v(h.depth, h.height, h.width, h.spacing);
  for (std::size_t i = 0; i < values.size(); ++i) v.voxels[i] = values[i] != 0.0f ? 1 : 0;
  return v;
}

void save_volume(const fs::path& mhd_path, std::size_t depth, std::size_t height, std::size_t width,
                 std::span<const float> values, const Spacing& spacing, ElementType type) {
  if (values.size() != depth * height * width) throw DataError("volume data does not match its dimensions");
  MhdHeader h;
  h.depth = depth;
  h.height = height;
  h.width = width;
  h.element_type = type;
  h.spacing = spacing;
  h.data_file = mhd_path.stem().string() + ".raw";
  std::string raw;
  raw.reserve(values.size() * element_size(type));
  for (float v : values) {
    switch (type) {
      case ElementType::UInt8: raw.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)))); break;
      case ElementType::Int8: raw.push_back(static_cast<char>(static_cast<std::int8_t>(std::clamp(std::lround(v), -128L, 127L)))); break;
      case ElementType::Int16: store_le(raw, static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L))); break;
      case ElementType::UInt16: store_le(raw, static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L))); break;
      case ElementType::Float32: store_le(raw, std::bit_cast<std::uint32_t>(v)); break;
    }
  }
  write_bytes(mhd_path.parent_path() / h.data_file, raw);
  write_bytes(mhd_path, write_mhd(h));
}

void save_mask(const fs::path& mhd_path, const BinaryVolume& mask) {
  std::vector<float> values(mask.voxels.begin(), mask.voxels.end());
  save_volume(mhd_path, mask.depth, mask.height, mask.width, values, mask.spacing, ElementType::UInt8);
}

}  // namespace bunet
