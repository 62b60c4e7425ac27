#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "dac/error.hpp"

namespace dac::io {

// Little-endian primitives shared by the DAC* binary formats.

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void magic(std::string_view tag) { raw(tag.data(), tag.size()); }

  void u8(std::uint8_t v) { raw(&v, 1); }

  void u32(std::uint32_t v) {
    std::array<unsigned char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b.data(), b.size());
  }

  void u64(std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b.data(), b.size());
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("failed writing " + path_.string());
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  void expect_magic(std::string_view tag) {
    std::string got(tag.size(), '\0');
    raw(got.data(), got.size());
    if (got != tag)
      throw IoError(path_.string() + ": bad magic, expected \"" + std::string(tag) + "\"");
  }

  std::uint8_t u8() {
    std::uint8_t v = 0;
    raw(&v, 1);
    return v;
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    raw(b.data(), b.size());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::array<unsigned char, 8> b{};
    raw(b.data(), b.size());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw IoError(path_.string() + ": trailing bytes after payload");
  }

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError(path_.string() + ": unexpected end of file");
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace dac::io
