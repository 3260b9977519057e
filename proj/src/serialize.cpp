#include "airtree/serialize.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "airtree/errors.hpp"

namespace airtree {

namespace {

void put_bytes(std::ostream& out, const void* data, std::size_t len) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw DataError("binary write failed");
}

void get_bytes(std::istream& in, void* data, std::size_t len) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in.gcount()) != len)
    throw DataError("binary read truncated");
}

}  // namespace

void BinaryWriter::u8(std::uint8_t v) { put_bytes(out_, &v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  put_bytes(out_, b, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(out_, b, 8);
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  if (!s.empty()) put_bytes(out_, s.data(), s.size());
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  get_bytes(in_, &v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint8_t b[4];
  get_bytes(in_, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t BinaryReader::u64() {
  std::uint8_t b[8];
  get_bytes(in_, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string BinaryReader::str() {
  std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n) get_bytes(in_, s.data(), n);
  return s;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  return fnv1a64(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("error reading file: " + path.string());
  return contents;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create file: " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("error writing file: " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw DataError("manifest: bad 64-bit hex field");
  char* stop = nullptr;
  const std::uint64_t v = std::strtoull(s.c_str(), &stop, 16);
  if (stop != s.c_str() + 16) throw DataError("manifest: bad 64-bit hex field");
  return v;
}

}  // namespace airtree
