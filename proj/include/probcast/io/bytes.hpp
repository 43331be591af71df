#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "probcast/core/error.hpp"

namespace probcast::io {

/// Little-endian encoder into a growable buffer.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <class UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void str16(std::string_view s) {
    if (s.size() > 0xffff) throw InvalidArgument("string too long for a u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

/// Little-endian decoder; every read is bounds-checked and a short buffer
/// raises DecodeError naming `what`.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data, std::string what = "buffer")
      : data_(std::move(data)), what_(std::move(what)) {}

  static ByteReader from_file(const std::filesystem::path& path);

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <class UInt>
  UInt uint() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      v |= static_cast<UInt>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(UInt);
    return v;
  }

  std::uint16_t u16() { return uint<std::uint16_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str16() { return bytes(u16()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n) const {
    if (remaining() < n)
      throw DecodeError(what_ + ": truncated payload (need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", have " + std::to_string(remaining()) + ")");
  }

 private:
  std::vector<char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

inline ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  return ByteReader(read_bytes(path), path.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace probcast::io
