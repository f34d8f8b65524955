#pragma once

// Little-endian binary encoding shared by the dataset, model and detector
// file formats.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advbench {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void magic(std::string_view m);
  void u32(std::uint32_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void text(std::string_view s);  // u32 length + bytes
  // Appends CRC32 of everything written so far.
  void crc();

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Reads with bounds checks; every failure is a FormatError carrying the
// current offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view m);
  std::uint32_t u32();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string text();
  // Verifies a trailing CRC32 over bytes [0, offset) and that nothing follows.
  void expect_crc();
  void expect_end() const;

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }
  // Throws unless `n` more bytes are available.
  void require(std::size_t n, std::string_view field) const;
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace advbench
