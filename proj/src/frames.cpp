#include "hrmlab/frames.hpp"

#include <cerrno>
#include <cstring>
#include <unistd.h>

#include "hrmlab/errors.hpp"
#include "hrmlab/sha256.hpp"

namespace hrmlab {

void append_frame(std::string& buf, std::string_view payload) {
  if (payload.size() > kMaxFrameLen)
    throw FramingError("frame payload exceeds limit");
  std::uint32_t len = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) buf += char((len >> (8 * i)) & 0xff);
  buf.append(payload.data(), payload.size());
}

std::string frame(std::string_view payload) {
  std::string out;
  append_frame(out, payload);
  return out;
}

void FrameReader::feed(std::string_view bytes) {
  // Compact occasionally so long streams do not grow without bound.
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  } else if (pos_ > (64u << 10) && pos_ > buf_.size() / 2) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
  buf_.append(bytes.data(), bytes.size());
}

std::optional<std::string> FrameReader::next() {
  if (buf_.size() - pos_ < 4) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= std::uint32_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
  if (len > kMaxFrameLen) throw FramingError("frame length exceeds limit");
  if (buf_.size() - pos_ - 4 < len) return std::nullopt;
  std::string payload = buf_.substr(pos_ + 4, len);
  pos_ += 4 + len;
  return payload;
}

std::vector<std::string> split_frames(std::string_view stream) {
  FrameReader r;
  r.feed(stream);
  std::vector<std::string> out;
  while (auto f = r.next()) out.push_back(std::move(*f));
  if (r.leftover() != 0)
    throw FramingError("framed stream has " + std::to_string(r.leftover()) +
                       " trailing bytes");
  return out;
}

std::optional<std::string> read_frame_fd(int fd) {
  auto read_exact = [fd](char* p, std::size_t n, bool eof_ok) -> bool {
    std::size_t got = 0;
    while (got < n) {
      ssize_t r = ::read(fd, p + got, n - got);
      if (r == 0) {
        if (eof_ok && got == 0) return false;
        throw FramingError("eof inside frame");
      }
      if (r < 0) {
        if (errno == EINTR) continue;
        throw FramingError(std::string("frame read: ") + std::strerror(errno));
      }
      got += std::size_t(r);
    }
    return true;
  };
  char hdr[4];
  if (!read_exact(hdr, 4, true)) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= std::uint32_t(std::uint8_t(hdr[i])) << (8 * i);
  if (len > kMaxFrameLen) throw FramingError("frame length exceeds limit");
  std::string payload(len, '\0');
  if (len > 0) read_exact(payload.data(), len, false);
  return payload;
}

void write_frame_fd(int fd, std::string_view payload) {
  std::string buf = frame(payload);
  std::size_t sent = 0;
  while (sent < buf.size()) {
    ssize_t w = ::write(fd, buf.data() + sent, buf.size() - sent);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("frame write: ") + std::strerror(errno));
    }
    sent += std::size_t(w);
  }
}

std::string golden_pack(const GoldenFile& g) {
  std::string body;
  append_frame(body, g.meta_json);
  for (const auto& r : g.responses) append_frame(body, r);
  auto digest = Sha256::of(body);
  body.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return body;
}

GoldenFile golden_unpack(std::string_view blob) {
  if (blob.size() < 32) throw IntegrityError("golden file shorter than its hash");
  std::string_view body = blob.substr(0, blob.size() - 32);
  std::string_view footer = blob.substr(blob.size() - 32);
  auto digest = Sha256::of(body);
  if (std::memcmp(digest.data(), footer.data(), 32) != 0)
    throw IntegrityError("golden file content hash mismatch");
  std::vector<std::string> frames = split_frames(body);
  if (frames.empty()) throw IntegrityError("golden file missing meta frame");
  GoldenFile g;
  g.meta_json = std::move(frames.front());
  g.responses.assign(std::make_move_iterator(frames.begin() + 1),
                     std::make_move_iterator(frames.end()));
  return g;
}

}  // namespace hrmlab
