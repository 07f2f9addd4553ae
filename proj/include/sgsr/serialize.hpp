#pragma once

// Checkpoint container: magic "SGSRCKPT", u32 version, u32 section count,
// then per section (u32 name length, name, u64 size, bytes), then a SHA-256
// of everything before it. All integers little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sgsr/nn.hpp"

namespace sgsr {

constexpr uint32_t kContainerVersion = 1;

class Container {
 public:
  void add(const std::string& name, std::string bytes);
  bool has(const std::string& name) const;
  const std::string& get(const std::string& name) const;  // throws if absent
  const std::vector<std::pair<std::string, std::string>>& sections() const { return sections_; }

  std::string encode() const;
  static Container decode(const std::string& bytes);

 private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

void save_container(const Container& container, const std::filesystem::path& path);
Container load_container(const std::filesystem::path& path);

// Parameter blob: u32 count, then per entry u32 name length, name, u8 kind
// (1 trainable, 0 buffer), u32 ndim, ndim x i64 dims, float32 values.
template <typename T>
std::string encode_params(const ParamStore<T>& store);
// Overwrites values in `store`; names, kinds and shapes must match exactly.
template <typename T>
void decode_params(const std::string& bytes, ParamStore<T>& store, const std::string& what);

// Same layout for a plain list of float vectors (optimizer moments).
std::string encode_vectors(const std::vector<std::vector<float>>& vectors);
std::vector<std::vector<float>> decode_vectors(const std::string& bytes);

// Flat "key=value" lines.
std::string encode_kv(const std::vector<std::pair<std::string, std::string>>& kv);
std::vector<std::pair<std::string, std::string>> decode_kv(const std::string& text);

}  // namespace sgsr
