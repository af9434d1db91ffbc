#include "ssattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ssattn/config.hpp"
#include "ssattn/errors.hpp"

namespace ssattn::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Input {
 public:
  Input(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  std::string get_string(std::size_t limit) {
    const auto n = get<std::uint32_t>();
    if (n > limit) throw IoError(path_ + ": corrupt checkpoint (string length " + std::to_string(n) + ")");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError(path_ + ": truncated checkpoint");
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save(const std::string& path, const model::Model& model) {
  const std::string cfg = config::to_json(model.config()).dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, config::fnv1a(cfg));
  put_string(out, cfg);
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put<std::uint64_t>(out, d);
    const auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

model::Model load(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path);
  Input in(file, path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(path + ": not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto digest = in.get<std::uint64_t>();
  const std::string cfg_text = in.get_string(1 << 20);
  if (config::fnv1a(cfg_text) != digest) throw IoError(path + ": config digest mismatch");
  model::Model model(config::model_from_json(config::Json::parse(cfg_text)), 0);

  std::map<std::string, Tensor> by_name;
  for (const auto& p : model.parameters()) by_name.emplace(p.name, p.tensor);
  const auto count = in.get<std::uint32_t>();
  if (count != by_name.size()) {
    throw IoError(path + ": expected " + std::to_string(by_name.size()) + " arrays, found " + std::to_string(count));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.get_string(4096);
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw IoError(path + ": corrupt rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path + ": unexpected array " + name);
    if (it->second.shape() != shape) {
      throw IoError(path + ": shape mismatch for " + name + ": " + to_string(shape) + " vs " + to_string(it->second.shape()));
    }
    auto dst = it->second.data_mut();
    in.read(reinterpret_cast<char*>(dst.data()), dst.size() * sizeof(double));
  }
  return model;
}

}  // namespace ssattn::checkpoint
