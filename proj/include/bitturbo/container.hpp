#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bitturbo {

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void f64s(std::span<const double> v);  // count (u64) then values
  void bytes(std::span<const std::uint8_t> v) { out_.insert(out_.end(), v.begin(), v.end()); }
  void str(const std::string& s);        // length (u64) then bytes

  const std::vector<std::uint8_t>& data() const noexcept { return out_; }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

/// Bounds-checked little-endian decoder. Errors are std::runtime_error
/// prefixed with `context`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  /// Reads a count-prefixed array and checks the count equals `expected`.
  std::vector<double> f64s(std::size_t expected);
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string str();

  bool done() const noexcept { return pos_ == data_.size(); }
  /// Throws unless every byte was consumed.
  void expect_done() const;
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

using SectionTag = std::array<char, 4>;
SectionTag make_tag(const char (&text)[5]);
std::string tag_string(const SectionTag& tag);

struct Section {
  SectionTag tag{};
  std::vector<std::uint8_t> data;
};

/// Tagged-section file: magic "BTAE", version, a table of
/// (tag, offset, length, crc32) entries, then the payloads in table order.
class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add(const SectionTag& tag, std::vector<std::uint8_t> data);
  /// First section with the tag, or nullptr.
  const Section* find(const SectionTag& tag) const;
  std::vector<const Section*> find_all(const SectionTag& tag) const;
  const std::vector<Section>& sections() const noexcept { return sections_; }

  std::vector<std::uint8_t> serialize() const;
  /// Rejects bad magic, unknown versions, truncated tables and CRC mismatches
  /// (naming the section). Unknown tags are kept and left to the caller.
  static Container parse(std::span<const std::uint8_t> bytes);

 private:
  std::vector<Section> sections_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, std::span<const std::uint8_t> data);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace bitturbo
