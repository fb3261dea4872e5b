#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hrmlab {

// Length-prefixed framing used on every client/workload channel and in
// golden files: u32 little-endian payload length, then the payload bytes.
// Truncation by a crash always leaves a valid frame prefix.
constexpr std::uint32_t kMaxFrameLen = 16u << 20;

void append_frame(std::string& buf, std::string_view payload);
std::string frame(std::string_view payload);

// Incremental decoder. feed() accepts arbitrary byte chunks; next() yields
// complete payloads in order. Oversized or malformed lengths throw
// FramingError. leftover() reports undecoded tail bytes (a partial frame).
class FrameReader {
 public:
  void feed(std::string_view bytes);
  std::optional<std::string> next();
  std::size_t leftover() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

// Splits a complete framed stream. Throws FramingError on trailing garbage.
std::vector<std::string> split_frames(std::string_view stream);

// Blocking fd helpers for the subprocess serve channel. read_frame returns
// nullopt on clean EOF at a frame boundary; mid-frame EOF or an oversized
// length throws FramingError. write errors throw SessionError.
std::optional<std::string> read_frame_fd(int fd);
void write_frame_fd(int fd, std::string_view payload);

// Golden files: one meta frame (JSON), the framed response stream, then a
// 32-byte SHA-256 footer over everything before it.
struct GoldenFile {
  std::string meta_json;
  std::vector<std::string> responses;
};

std::string golden_pack(const GoldenFile& g);
GoldenFile golden_unpack(std::string_view blob);  // IntegrityError on bad hash

}  // namespace hrmlab
