#include "bitturbo/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace bitturbo {
namespace {

constexpr char kMagic[4] = {'B', 'T', 'A', 'E'};
constexpr std::size_t kHeaderBytes = 12;
constexpr std::size_t kEntryBytes = 24;

}  // namespace

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void ByteWriter::str(const std::string& s) {
  u64(s.size());
  out_.insert(out_.end(), s.begin(), s.end());
}

ByteReader::ByteReader(std::span<const std::uint8_t> data, std::string context)
    : data_(data), context_(std::move(context)) {}

void ByteReader::fail(const std::string& what) const { throw std::runtime_error(context_ + ": " + what); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  if (n > data_.size() - pos_) fail("truncated (need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ")");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return bytes(1)[0]; }

std::uint32_t ByteReader::u32() {
  auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> ByteReader::f64s(std::size_t expected) {
  const std::uint64_t n = u64();
  if (n != expected) fail("expected " + std::to_string(expected) + " values, found " + std::to_string(n));
  std::vector<double> out(n);
  for (double& v : out) v = f64();
  return out;
}

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  auto b = bytes(n);
  return {b.begin(), b.end()};
}

void ByteReader::expect_done() const {
  if (!done()) fail(std::to_string(data_.size() - pos_) + " trailing bytes");
}

SectionTag make_tag(const char (&text)[5]) { return {text[0], text[1], text[2], text[3]}; }

std::string tag_string(const SectionTag& tag) { return {tag.begin(), tag.end()}; }

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::size_t n = std::min<std::size_t>(data.size() - pos, 1u << 30);
    crc = crc32(crc, data.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void Container::add(const SectionTag& tag, std::vector<std::uint8_t> data) {
  sections_.push_back({tag, std::move(data)});
}

const Section* Container::find(const SectionTag& tag) const {
  for (const Section& s : sections_) {
    if (s.tag == tag) return &s;
  }
  return nullptr;
}

std::vector<const Section*> Container::find_all(const SectionTag& tag) const {
  std::vector<const Section*> out;
  for (const Section& s : sections_) {
    if (s.tag == tag) out.push_back(&s);
  }
  return out;
}

std::vector<std::uint8_t> Container::serialize() const {
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(sections_.size()));
  std::uint64_t offset = kHeaderBytes + kEntryBytes * sections_.size();
  for (const Section& s : sections_) {
    w.bytes({reinterpret_cast<const std::uint8_t*>(s.tag.data()), 4});
    w.u64(offset);
    w.u64(s.data.size());
    w.u32(crc32_of(s.data));
    offset += s.data.size();
  }
  for (const Section& s : sections_) w.bytes(s.data);
  return w.take();
}

Container Container::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "model container");
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) r.fail("bad magic (not a BTAE file)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    SectionTag tag;
    const auto t = r.bytes(4);
    std::copy(t.begin(), t.end(), reinterpret_cast<std::uint8_t*>(tag.data()));
    const std::uint64_t offset = r.u64();
    const std::uint64_t length = r.u64();
    const std::uint32_t crc = r.u32();
    if (offset > bytes.size() || length > bytes.size() - offset) {
      r.fail("section " + tag_string(tag) + " extends past end of file");
    }
    auto payload = bytes.subspan(offset, length);
    if (crc32_of(payload) != crc) r.fail("CRC mismatch in section " + tag_string(tag));
    c.add(tag, {payload.begin(), payload.end()});
  }
  return c;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace bitturbo
