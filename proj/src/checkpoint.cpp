// SPDX-License-Identifier: Apache-2.0

#include "indm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace indm {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ofstream& f, const std::string& s, bool wide) {
  if (wide) {
    put<std::uint64_t>(f, s.size());
  } else {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()));
  }
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::ifstream& f, const std::string& path) : f_(f), path_(path) {}

  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  std::string string(std::uint64_t n) {
    if (n > (1ull << 32)) fail("implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::uint64_t n) {
    f_.read(dst, static_cast<std::streamsize>(n));
    if (!f_) fail("truncated file");
  }

  [[noreturn]] void fail(const std::string& what) { throw Error("checkpoint " + path_ + ": " + what); }

 private:
  std::ifstream& f_;
  std::string path_;
};

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, v] : arrays) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, v] : arrays) {
    if (n == name) return v;
  }
  throw Error("checkpoint has no array named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint: " + tmp.string());
    f.write("INDM", 4);
    put<std::uint32_t>(f, kCheckpointVersion);
    put_string(f, ckpt.config_text, true);
    put<std::uint64_t>(f, ckpt.step);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& [name, t] : ckpt.arrays) {
      put_string(f, name, false);
      put<std::uint32_t>(f, static_cast<std::uint32_t>(t.rows()));
      put<std::uint32_t>(f, static_cast<std::uint32_t>(t.cols()));
      f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    f.flush();
    if (!f) throw Error("failed writing checkpoint: " + tmp.string());
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint: " + path);
  Reader r(f, path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "INDM", 4) != 0) r.fail("not an INDM checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.config_text = r.string(r.get<std::uint64_t>());
  ckpt.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    Tensor t(rows, cols);
    r.read(reinterpret_cast<char*>(t.data()), static_cast<std::uint64_t>(rows) * cols * sizeof(double));
    ckpt.arrays.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace indm
