#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "bfg/autograd.hpp"
#include "bfg/errors.hpp"

namespace bfg::ag {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'F', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, ckpt.size());
  for (const auto& [name, data] : ckpt) {
    if (data.values.size() != data.shape.size()) throw ContractError("write_checkpoint: size mismatch for " + name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, data.shape.rows);
    put<std::uint64_t>(out, data.shape.cols);
    out.write(reinterpret_cast<const char*>(data.values.data()),
              static_cast<std::streamsize>(data.values.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + ": not a checkpoint (bad magic)");
  }
  const auto count = get<std::uint64_t>(in, path);
  Checkpoint ckpt;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw ParseError(path + ": implausible tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ParseError(path + ": truncated checkpoint");
    TensorData data;
    data.shape.rows = get<std::uint64_t>(in, path);
    data.shape.cols = get<std::uint64_t>(in, path);
    if (data.shape.rows == 0 || data.shape.cols == 0 || data.shape.size() > (std::uint64_t{1} << 32)) {
      throw ParseError(path + ": invalid shape for " + name);
    }
    data.values.resize(data.shape.size());
    if (!in.read(reinterpret_cast<char*>(data.values.data()),
                 static_cast<std::streamsize>(data.values.size() * sizeof(double)))) {
      throw ParseError(path + ": truncated data for " + name);
    }
    ckpt.emplace(std::move(name), std::move(data));
  }
  return ckpt;
}

}  // namespace bfg::ag
