#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pforge::io {

// Buffered little-endian writer; flushes to disk on finish().
class Writer {
 public:
  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f32s(std::span<const float> v);
  void str(std::string_view s);

  void finish(const std::filesystem::path& path) const;
  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Whole-file reader. Every failure is a FormatError carrying the offset.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);
  explicit Reader(std::vector<std::uint8_t> bytes);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint32_t u32_be();
  std::uint64_t u64();
  float f32();
  void f32s(std::span<float> out);
  std::string str();
  std::span<const std::uint8_t> raw(std::size_t n);

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t size() const noexcept { return buf_.size(); }
  std::uint64_t remaining() const noexcept { return buf_.size() - pos_; }
  void expect_end() const;
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace pforge::io
