#include "wtfd/binio.hpp"

#include <cstring>
#include <fstream>

#include "wtfd/errors.hpp"

namespace wtfd::io {

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(char(v & 0xff));
  buf.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path.string());
  return buf;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(data.data(), std::streamsize(data.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

void Reader::need(std::size_t n) const {
  if (pos_ + n > buf_.size())
    throw ParseError("malformed " + source_ + ": truncated at byte " +
                     std::to_string(pos_));
}

std::uint8_t Reader::u8() {
  need(1);
  return std::uint8_t(buf_[pos_++]);
}

std::uint16_t Reader::u16() {
  need(2);
  std::uint16_t v = std::uint16_t(std::uint8_t(buf_[pos_])) |
                    std::uint16_t(std::uint8_t(buf_[pos_ + 1])) << 8;
  pos_ += 2;
  return v;
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= std::uint32_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

float Reader::f32() {
  std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string_view Reader::bytes(std::size_t n) {
  need(n);
  std::string_view v = buf_.substr(pos_, n);
  pos_ += n;
  return v;
}

}  // namespace wtfd::io
