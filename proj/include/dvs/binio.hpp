#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "dvs/error.hpp"

// Little-endian byte buffers shared by every on-disk format.
namespace dvs::binio {

class Writer {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void i8(std::int8_t v) { bytes_.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { put(v, 8); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked reader; every failure names the byte offset.
class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    const std::string got(reinterpret_cast<const char*>(bytes_.data() + pos_), m.size());
    if (got != m) {
      throw FormatError(source_ + ": magic mismatch at offset " + std::to_string(pos_) + ": expected '" +
                        std::string(m) + "', got '" + printable(got) + "'");
    }
    pos_ += m.size();
  }
  std::uint8_t u8(const char* what = "u8") {
    need(1, what);
    return bytes_[pos_++];
  }
  std::int8_t i8(const char* what = "i8") { return static_cast<std::int8_t>(u8(what)); }
  std::uint16_t u16(const char* what = "u16") { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char* what = "u32") { return static_cast<std::uint32_t>(get(4, what)); }
  std::int32_t i32(const char* what = "i32") { return static_cast<std::int32_t>(u32(what)); }
  float f32(const char* what = "f32") { return std::bit_cast<float>(u32(what)); }
  std::uint64_t u64(const char* what = "u64") { return get(8, what); }

  // Fails with expected vs actual length if `n` more bytes are not present.
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(source_ + ": truncated while reading " + what + " at offset " + std::to_string(pos_) +
                        ": expected length >= " + std::to_string(pos_ + n) + " bytes, actual " +
                        std::to_string(bytes_.size()));
    }
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  static std::string printable(const std::string& s) {
    std::string out;
    for (char c : s) out += (c >= 32 && c < 127) ? c : '?';
    return out;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace dvs::binio
