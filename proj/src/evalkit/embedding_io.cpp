// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "visnet/error.hpp"
#include "visnet/evalkit.hpp"

namespace visnet {
namespace {

constexpr std::array<char, 4> kMagic{'V', 'N', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

void write_embeddings(std::ostream& out, std::size_t count, std::size_t dim, std::span<const double> values) {
  if (values.size() != count * dim) throw DimensionError("embedding payload does not match count x dim");
  if (count > std::numeric_limits<std::uint32_t>::max() || dim > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("embedding file extents exceed 32 bits");
  }
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(count));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void save_embeddings(const std::string& path, std::size_t count, std::size_t dim, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write embedding file '" + path + "'");
  write_embeddings(out, count, dim, values);
}

EmbeddingFile read_embeddings(std::istream& in, const std::string& name) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw ParseError(name + ": bad magic bytes, not a VNEB embedding file");
  }
  std::uint32_t version = 0, count = 0, dim = 0;
  if (!get_u32(in, version) || !get_u32(in, count) || !get_u32(in, dim)) throw ParseError(name + ": truncated header");
  if (version != kVersion) throw ParseError(name + ": unsupported version " + std::to_string(version));
  EmbeddingFile f;
  f.count = count;
  f.dim = dim;
  f.values.resize(static_cast<std::size_t>(count) * dim);
  for (auto& v : f.values) {
    std::uint32_t bits = 0;
    if (!get_u32(in, bits)) throw ParseError(name + ": truncated payload");
    v = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(name + ": trailing bytes after payload");
  return f;
}

EmbeddingFile load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embedding file '" + path + "'");
  return read_embeddings(in, path);
}

}  // namespace visnet
