#include <array>
#include <cstring>
#include <fstream>
#include <map>

#include "panrestore/model.hpp"

namespace panrestore {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'F', 'M', 'B'};

void write_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                  static_cast<char>((v >> 16) & 0xff),
                                  static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes.data(), bytes.size());
}

std::uint32_t read_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw RuntimeFailure("checkpoint: unexpected end of file");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw RuntimeFailure("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, kCheckpointVersion);
  write_string(os, model.config().serialize());
  const auto params = model.parameters();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_string(os, p.name);
    const Shape s = p.tensor.shape();
    for (int dim : {s.n, s.c, s.h, s.w}) write_u32(os, static_cast<std::uint32_t>(dim));
    for (float v : p.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      write_u32(os, bits);
    }
  }
  if (!os) throw RuntimeFailure("failed writing checkpoint: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open checkpoint: " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw RuntimeFailure("not an PNRS checkpoint: " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version));
  }
  const ModelConfig cfg = ModelConfig::parse(read_string(is));
  Model<float> model = Model<float>::build(cfg);

  std::map<std::string, Tensor<float>> by_name;
  for (const auto& p : model.parameters()) by_name.emplace(p.name, p.tensor);

  const std::uint32_t count = read_u32(is);
  if (count != by_name.size()) {
    throw RuntimeFailure("checkpoint holds " + std::to_string(count) +
                         " tensors, config expects " + std::to_string(by_name.size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = read_string(is);
    Shape s;
    s.n = static_cast<int>(read_u32(is));
    s.c = static_cast<int>(read_u32(is));
    s.h = static_cast<int>(read_u32(is));
    s.w = static_cast<int>(read_u32(is));
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw RuntimeFailure("checkpoint tensor '" + name + "' not in model");
    Tensor<float> target = it->second;
    if (target.shape() != s) {
      throw RuntimeFailure("checkpoint tensor '" + name + "' has shape " + s.str() +
                           ", config expects " + target.shape().str());
    }
    for (float& v : target.data()) {
      const std::uint32_t bits = read_u32(is);
      std::memcpy(&v, &bits, sizeof v);
    }
    by_name.erase(it);
  }
  return model;
}

}  // namespace panrestore
