// Little-endian buffer serialization shared by the binary file formats.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace wtfd::io {

void put_u16(std::string& buf, std::uint16_t v);
void put_u32(std::string& buf, std::uint32_t v);
void put_f32(std::string& buf, float v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

// Cursor over a loaded buffer. Out-of-range reads throw ParseError naming the
// source and byte offset.
class Reader {
 public:
  Reader(std::string_view buf, std::string source, std::size_t pos = 0)
      : buf_(buf), source_(std::move(source)), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void need(std::size_t n) const;

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::string_view bytes(std::size_t n);

 private:
  std::string_view buf_;
  std::string source_;
  std::size_t pos_;
};

}  // namespace wtfd::io
