#include "stylecast/io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stylecast {

namespace {
constexpr char kMagic[4] = {'S', 'C', 'T', 'S'};
constexpr uint32_t kVersion = 1;
}  // namespace

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

void put_string(std::vector<uint8_t>& buf, const std::string& s) {
  put_u32(buf, static_cast<uint32_t>(s.size()));
  buf.insert(buf.end(), s.begin(), s.end());
}

void ByteReader::need(size_t n) const {
  if (pos_ + n > len_) throw std::runtime_error("binary read past end of buffer");
}

uint32_t ByteReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() {
  const uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string ByteReader::str() {
  const uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

const Tensor& TensorStore::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw std::out_of_range("tensor store: no entry '" + key + "'");
  return it->second;
}

std::vector<uint8_t> TensorStore::serialize() const {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u64(buf, entries_.size());
  for (const auto& [key, t] : entries_) {
    put_string(buf, key);
    put_u32(buf, static_cast<uint32_t>(t.rows));
    put_u32(buf, static_cast<uint32_t>(t.cols));
    for (float v : t.data) put_f32(buf, v);
  }
  return buf;
}

TensorStore TensorStore::deserialize(const uint8_t* data, size_t len) {
  ByteReader r(data, len);
  if (len < 4 || std::memcmp(data, kMagic, 4) != 0) {
    throw std::runtime_error("tensor store: bad magic");
  }
  r.u32();  // skip magic
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("tensor store: unsupported version " + std::to_string(version));
  }
  const uint64_t count = r.u64();
  TensorStore store;
  for (uint64_t i = 0; i < count; ++i) {
    std::string key = r.str();
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    Tensor t(rows, cols);
    for (auto& v : t.data) v = r.f32();
    store.entries_.emplace(std::move(key), std::move(t));
  }
  return store;
}

void TensorStore::save(const std::string& path) const { write_file_bytes(path, serialize()); }

TensorStore TensorStore::load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return deserialize(bytes.data(), bytes.size());
}

std::string floats_to_hex(const std::vector<float>& v) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(v.size() * 8);
  for (float f : v) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) {  // little-endian byte order
      const uint8_t b = static_cast<uint8_t>((bits >> (8 * i)) & 0xff);
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
  }
  return out;
}

std::vector<float> hex_to_floats(const std::string& hex) {
  if (hex.size() % 8 != 0) throw std::runtime_error("hex float payload: length not multiple of 8");
  auto nibble = [](char c) -> uint32_t {
    if (c >= '0' && c <= '9') return static_cast<uint32_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<uint32_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<uint32_t>(c - 'A' + 10);
    throw std::runtime_error("hex float payload: invalid character");
  };
  std::vector<float> out(hex.size() / 8);
  for (size_t i = 0; i < out.size(); ++i) {
    uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      const uint32_t hi = nibble(hex[i * 8 + 2 * b]);
      const uint32_t lo = nibble(hex[i * 8 + 2 * b + 1]);
      bits |= ((hi << 4) | lo) << (8 * b);
    }
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  f.seekg(0, std::ios::end);
  const std::streamsize n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw std::runtime_error("read failed: " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_file_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace stylecast
