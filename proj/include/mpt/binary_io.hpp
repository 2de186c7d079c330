#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mpt::io {

/// Appends little-endian encodings regardless of host byte order.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s);
  /// u32 length followed by the raw bytes.
  void string(std::string_view s);

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  std::vector<std::uint8_t>& buffer() noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian decoder; overruns throw FormatError(truncated).
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  std::string string();
  std::span<const std::uint8_t> take(std::size_t n);

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes to `path.tmp` and renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> data);
void write_text_atomic(const std::string& path, std::string_view text);

std::uint32_t crc32(std::span<const std::uint8_t> data);

}  // namespace mpt::io
