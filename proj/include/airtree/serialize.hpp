#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace airtree {

// Little-endian fixed-width binary encoding. Doubles travel as their IEEE-754
// bit pattern, so every snapshot/model round-trips bit-exactly.

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str();

 private:
  std::istream& in_;
};

// FNV-1a over raw bytes; used for artifact fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Fingerprint of a whole file's contents. Throws DataError if unreadable.
std::uint64_t file_fingerprint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

// Shortest decimal form that parses back to the identical double
// (printf "%.17g" trimmed via round-trip probing). Keeps text artifacts
// readable while preserving bit-exact reload.
std::string format_double(double v);

// 16-digit lowercase hex without prefix; bit patterns in JSON manifests.
std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

}  // namespace airtree
