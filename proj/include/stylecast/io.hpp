#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stylecast/tensor.hpp"

namespace stylecast {

// Sidecar binary store: named float32 matrices, all scalars little-endian.
// Layout: magic "SCTS", u32 version, u64 count, then per entry
// [u32 key_len, key bytes, u32 rows, u32 cols, rows*cols f32].
// Entries are written in key order so identical contents give identical bytes.
class TensorStore {
 public:
  void put(const std::string& key, Tensor t) { entries_[key] = std::move(t); }
  const Tensor& get(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

  std::vector<uint8_t> serialize() const;
  static TensorStore deserialize(const uint8_t* data, size_t len);

 private:
  std::map<std::string, Tensor> entries_;
};

// Little-endian helpers shared by the store and checkpoint writers.
void put_u32(std::vector<uint8_t>& buf, uint32_t v);
void put_u64(std::vector<uint8_t>& buf, uint64_t v);
void put_f32(std::vector<uint8_t>& buf, float v);
void put_string(std::vector<uint8_t>& buf, const std::string& s);

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}
  uint32_t u32();
  uint64_t u64();
  float f32();
  std::string str();
  bool done() const { return pos_ == len_; }
  size_t remaining() const { return len_ - pos_; }

 private:
  void need(size_t n) const;
  const uint8_t* data_;
  size_t len_;
  size_t pos_ = 0;
};

// Lossless float payloads for line-oriented text formats.
std::string floats_to_hex(const std::vector<float>& v);
std::vector<float> hex_to_floats(const std::string& hex);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace stylecast
