#include "cav/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cav::num {

namespace {

constexpr char kMagic[] = "CAVCKPT";
constexpr std::size_t kMagicLen = 7;
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path + ": " + why);
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedBlocks& blocks) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(path, "cannot open for writing");
  f.write(kMagic, kMagicLen);
  f.put(char(kVersion));
  put_u32(f, std::uint32_t(blocks.size()));
  for (const auto& [name, m] : blocks) {
    put_u32(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    put_u32(f, std::uint32_t(m.rows));
    put_u32(f, std::uint32_t(m.cols));
    f.write(reinterpret_cast<const char*>(m.data.data()),
            std::streamsize(m.size() * sizeof(double)));
  }
  if (!f) fail(path, "write failed");
}

NamedBlocks load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  char magic[kMagicLen] = {};
  f.read(magic, kMagicLen);
  if (!f || std::memcmp(magic, kMagic, kMagicLen) != 0) fail(path, "bad magic");
  int version = f.get();
  if (version != kVersion) fail(path, "unsupported version " + std::to_string(version));
  std::uint32_t count = get_u32(f);
  if (!f) fail(path, "truncated header");
  NamedBlocks out;
  out.reserve(count);
  for (std::uint32_t b = 0; b < count; ++b) {
    std::uint32_t name_len = get_u32(f);
    if (!f || name_len > 4096) fail(path, "bad block name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    std::uint32_t rows = get_u32(f);
    std::uint32_t cols = get_u32(f);
    if (!f || rows > (1u << 20) || cols > (1u << 20)) fail(path, "bad block shape");
    Matrix m{int(rows), int(cols)};
    f.read(reinterpret_cast<char*>(m.data.data()),
           std::streamsize(m.size() * sizeof(double)));
    if (!f) fail(path, "truncated block " + name);
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace cav::num
