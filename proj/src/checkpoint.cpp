#include "bunet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bunet/errors.hpp"
#include "bunet/unet.hpp"

namespace bunet {

namespace {

constexpr std::array<char, 8> kMagic{'B', 'U', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is, const std::filesystem::path& path) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated checkpoint " + path.string());
  return v;
}

std::string get_string(std::istream& is, const std::filesystem::path& path, std::uint32_t limit) {
  const auto len = get<std::uint32_t>(is, path);
  if (len > limit) throw DataError("corrupt checkpoint " + path.string());
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw DataError("truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelGraph<float>& graph) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + tmp.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kVersion);
    const std::string text = to_config_text(config);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(graph.parameters().size()));
    for (const auto& p : graph.parameters()) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      const Shape s = p.value.shape();
      for (std::size_t d : {s.n, s.c, s.h, s.w}) put<std::uint64_t>(os, d);
      const auto v = p.value.values();
      os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }
    os.flush();
    if (!os) {
      os.close();
      std::filesystem::remove(tmp);
      throw DataError("failed writing checkpoint " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  if (get<std::uint32_t>(is, path) != kVersion) throw DataError("unsupported checkpoint version in " + path.string());
  RunConfig config;
  try {
    config = parse_config_text(get_string(is, path, 1u << 20));
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path.string() + " has an invalid configuration: " + e.what());
  }
  Checkpoint ck{config, build_model<float>(config.model)};
  auto& params = ck.graph.parameters();
  const auto count = get<std::uint32_t>(is, path);
  if (count != params.size()) {
    throw DataError("checkpoint " + path.string() + " holds " + std::to_string(count) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = get_string(is, path, 4096);
    if (name != p.name) throw DataError("checkpoint parameter '" + name + "' does not match '" + p.name + "'");
    std::array<std::uint64_t, 4> dims{};
    for (auto& d : dims) d = get<std::uint64_t>(is, path);
    const Shape s = p.value.shape();
    if (dims[0] != s.n || dims[1] != s.c || dims[2] != s.h || dims[3] != s.w) {
      throw DataError("checkpoint parameter '" + name + "' has shape " + std::to_string(dims[0]) + "x" +
                      std::to_string(dims[1]) + "x" + std::to_string(dims[2]) + "x" + std::to_string(dims[3]) +
                      ", expected " + s.str());
    }
    auto v = p.value.values();
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()))) {
      throw DataError("truncated checkpoint " + path.string());
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in checkpoint " + path.string());
  return ck;
}

}  // namespace bunet
