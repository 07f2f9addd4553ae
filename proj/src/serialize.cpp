#include "sgsr/serialize.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sgsr {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'G', 'S', 'R', 'C', 'K', 'P', 'T'};
constexpr size_t kHashBytes = 32;

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }
  std::string take(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error(what_ + ": truncated data");
  }
  const std::string& bytes_;
  std::string what_;
  size_t pos_ = 0;
};

std::string raw_sha256(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  return std::string(reinterpret_cast<const char*>(digest), len);
}

std::string to_hex(const std::string& raw) {
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned char c : raw) {
    hex += digits[c >> 4];
    hex += digits[c & 15];
  }
  return hex;
}

}  // namespace

void Container::add(const std::string& name, std::string bytes) {
  if (has(name)) throw std::logic_error("container: duplicate section " + name);
  sections_.emplace_back(name, std::move(bytes));
}

bool Container::has(const std::string& name) const {
  return std::any_of(sections_.begin(), sections_.end(), [&](const auto& s) { return s.first == name; });
}

const std::string& Container::get(const std::string& name) const {
  for (const auto& s : sections_)
    if (s.first == name) return s.second;
  throw std::runtime_error("checkpoint: missing section '" + name + "'");
}

std::string Container::encode() const {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kContainerVersion);
  put<uint32_t>(out, static_cast<uint32_t>(sections_.size()));
  for (const auto& [name, bytes] : sections_) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint64_t>(out, bytes.size());
    out += bytes;
  }
  out += raw_sha256(out);
  return out;
}

Container Container::decode(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 + kHashBytes || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: not an sgsr container");
  }
  uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kContainerVersion) {
    throw std::runtime_error("checkpoint: unsupported container version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kContainerVersion) + ")");
  }
  const std::string body = bytes.substr(0, bytes.size() - kHashBytes);
  const std::string stored = bytes.substr(bytes.size() - kHashBytes);
  const std::string actual = raw_sha256(body);
  if (stored != actual) {
    throw std::runtime_error("checkpoint (version " + std::to_string(version) + "): checksum mismatch, stored " +
                             to_hex(stored) + ", computed " + to_hex(actual));
  }
  Reader r(body, "checkpoint");
  r.take(sizeof(kMagic));
  r.get<uint32_t>();
  const uint32_t count = r.get<uint32_t>();
  Container c;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.take(r.get<uint32_t>());
    const uint64_t size = r.get<uint64_t>();
    c.add(name, r.take(size));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes after last section");
  return c;
}

std::string sha256_hex(const std::string& bytes) { return to_hex(raw_sha256(bytes)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error(tmp.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

void save_container(const Container& container, const std::filesystem::path& path) {
  write_file_atomic(path, container.encode());
}

Container load_container(const std::filesystem::path& path) {
  try {
    return Container::decode(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

template <typename T>
std::string encode_params(const ParamStore<T>& store) {
  std::string out;
  put<uint32_t>(out, static_cast<uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out += e.name;
    put<uint8_t>(out, e.trainable ? 1 : 0);
    put<uint32_t>(out, static_cast<uint32_t>(e.tensor.ndim()));
    for (int64_t d : e.tensor.shape()) put<int64_t>(out, d);
    for (T v : e.tensor.data()) put<float>(out, static_cast<float>(v));
  }
  return out;
}

template <typename T>
void decode_params(const std::string& bytes, ParamStore<T>& store, const std::string& what) {
  Reader r(bytes, what);
  const uint32_t count = r.get<uint32_t>();
  auto& entries = store.entries();
  if (count != entries.size()) {
    throw std::runtime_error(what + ": stored " + std::to_string(count) + " tensors, network has " +
                             std::to_string(entries.size()));
  }
  for (auto& e : entries) {
    const std::string name = r.take(r.get<uint32_t>());
    const bool trainable = r.get<uint8_t>() != 0;
    Shape shape(r.get<uint32_t>());
    for (auto& d : shape) d = r.get<int64_t>();
    if (name != e.name || trainable != e.trainable || shape != e.tensor.shape()) {
      throw std::runtime_error(what + ": stored tensor " + name + " " + shape_str(shape) + " does not match " +
                               e.name + " " + shape_str(e.tensor.shape()));
    }
    auto dst = e.tensor.mutable_data();
    for (auto& v : dst) v = static_cast<T>(r.get<float>());
  }
  if (!r.done()) throw std::runtime_error(what + ": trailing bytes");
}

std::string encode_vectors(const std::vector<std::vector<float>>& vectors) {
  std::string out;
  put<uint32_t>(out, static_cast<uint32_t>(vectors.size()));
  for (const auto& v : vectors) {
    put<uint64_t>(out, v.size());
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return out;
}

std::vector<std::vector<float>> decode_vectors(const std::string& bytes) {
  Reader r(bytes, "optimizer state");
  std::vector<std::vector<float>> vectors(r.get<uint32_t>());
  for (auto& v : vectors) {
    v.resize(r.get<uint64_t>());
    const std::string raw = r.take(v.size() * sizeof(float));
    std::memcpy(v.data(), raw.data(), raw.size());
  }
  if (!r.done()) throw std::runtime_error("optimizer state: trailing bytes");
  return vectors;
}

std::string encode_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("encode_kv: key/value contains a separator: " + k);
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> decode_kv(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("state section: malformed line '" + line + "'");
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

template std::string encode_params(const ParamStore<float>&);
template std::string encode_params(const ParamStore<double>&);
template void decode_params(const std::string&, ParamStore<float>&, const std::string&);
template void decode_params(const std::string&, ParamStore<double>&, const std::string&);

}  // namespace sgsr
