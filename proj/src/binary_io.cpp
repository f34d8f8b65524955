#include "advbench/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "advbench/error.hpp"

namespace advbench {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

void ByteWriter::magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

void ByteWriter::u32(std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  bytes_.insert(bytes_.end(), b, b + 4);
}

void ByteWriter::f64(double v) {
  std::uint8_t b[8];
  std::memcpy(b, &v, 8);
  bytes_.insert(bytes_.end(), b, b + 8);
}

void ByteWriter::f64s(std::span<const double> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  bytes_.insert(bytes_.end(), p, p + values.size() * sizeof(double));
}

void ByteWriter::text(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::crc() { u32(crc32(bytes_)); }

void ByteReader::fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg, offset_); }

void ByteReader::require(std::size_t n, std::string_view field) const {
  if (remaining() < n) {
    fail("truncated while reading " + std::string(field) + ": expected " + std::to_string(n) + " bytes, " +
         std::to_string(remaining()) + " available (file length " + std::to_string(bytes_.size()) + ")");
  }
}

void ByteReader::expect_magic(std::string_view m) {
  require(m.size(), "magic");
  if (std::memcmp(bytes_.data() + offset_, m.data(), m.size()) != 0) fail("bad magic, expected \"" + std::string(m) + "\"");
  offset_ += m.size();
}

std::uint32_t ByteReader::u32() {
  require(4, "u32");
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + offset_, 4);
  offset_ += 4;
  return v;
}

double ByteReader::f64() {
  require(8, "f64");
  double v;
  std::memcpy(&v, bytes_.data() + offset_, 8);
  offset_ += 8;
  return v;
}

std::vector<double> ByteReader::f64s(std::size_t n) {
  require(n * sizeof(double), "f64 array");
  std::vector<double> out(n);
  std::memcpy(out.data(), bytes_.data() + offset_, n * sizeof(double));
  offset_ += n * sizeof(double);
  return out;
}

std::string ByteReader::text() {
  const std::uint32_t n = u32();
  require(n, "text");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
  offset_ += n;
  return s;
}

void ByteReader::expect_crc() {
  const std::uint32_t expected = crc32(bytes_.subspan(0, offset_));
  const std::size_t at = offset_;
  const std::uint32_t stored = u32();
  if (stored != expected) {
    offset_ = at;
    fail("CRC32 mismatch");
  }
  expect_end();
}

void ByteReader::expect_end() const {
  if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes after payload");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace advbench
