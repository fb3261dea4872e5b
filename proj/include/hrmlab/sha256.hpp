#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace hrmlab {

// Minimal SHA-256 (FIPS 180-4). Used for golden-output content hashes and
// campaign plan hashes; self-contained so log files stay portable.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }

  // Finalizes and returns the 32-byte digest. The object must be reset()
  // before further use.
  std::array<std::uint8_t, 32> digest();

  static std::array<std::uint8_t, 32> of(std::string_view s) {
    Sha256 h;
    h.update(s);
    return h.digest();
  }

  static std::string hex(const std::array<std::uint8_t, 32>& d);
  static std::string hex_of(std::string_view s) { return hex(of(s)); }

 private:
  void process_block(const std::uint8_t* p);

  std::uint32_t state_[8];
  std::uint64_t bit_len_;
  std::uint8_t buf_[64];
  std::size_t buf_len_;
};

}  // namespace hrmlab
