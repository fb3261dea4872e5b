#pragma once

#include <cstdint>
#include <string>

namespace hrmlab {

enum class ProtectionTechnique { None, ParityPerWord, Secded7264 };

const char* protection_technique_name(ProtectionTechnique t);

// (72,64) codeword: positions 0..63 in `lo`, positions 64..71 in `hi`.
// Position 0 is the overall parity bit; positions 1,2,4,8,16,32,64 are the
// Hamming check bits; the remaining 64 positions carry data bits in
// ascending position order. The full layout table is in docs/secded-layout.md.
struct Codeword72 {
  std::uint64_t lo = 0;
  std::uint8_t hi = 0;

  bool get(unsigned pos) const {
    return pos < 64 ? (lo >> pos) & 1 : (hi >> (pos - 64)) & 1;
  }
  void set(unsigned pos, bool v) {
    if (pos < 64) {
      lo = (lo & ~(std::uint64_t(1) << pos)) | (std::uint64_t(v) << pos);
    } else {
      hi = std::uint8_t((hi & ~(1u << (pos - 64))) | (unsigned(v) << (pos - 64)));
    }
  }
  void flip(unsigned pos) { set(pos, !get(pos)); }
  bool operator==(const Codeword72&) const = default;
};

struct DecodeResult {
  enum class Kind {
    Clean,                  // no error observed
    Corrected,              // single-bit error repaired
    DetectedUncorrectable,  // error seen, cannot repair
    Silent                  // decode looked fine but the word is wrong;
                            // assigned only by outcome evaluation against
                            // the pre-error word (>=2-bit parity or >=3-bit
                            // SEC-DED scenarios)
  };
  Kind kind = Kind::Clean;
  std::uint64_t word = 0;      // Clean/Corrected: the decoded data word
  unsigned bit_index = 0;      // Corrected: codeword position repaired
};

// Even parity over all 64 data bits.
bool parity_encode(std::uint64_t word);
DecodeResult parity_check(std::uint64_t word, bool parity_bit);

Codeword72 secded_encode(std::uint64_t word);
DecodeResult secded_decode(const Codeword72& cw);

// Hardware-layer outcome of a memory error under a protection technique,
// simulating encode-at-write / decode-at-read around the corruption.
enum class ProtectionOutcome { MaskedByHw, DetectedOnly, Undetected };

const char* protection_outcome_name(ProtectionOutcome o);

ProtectionOutcome apply_protection(ProtectionTechnique technique,
                                   std::uint64_t pre_error_word,
                                   std::uint64_t post_error_word);

// Exhaustive conformance suites behind the `codec selftest` CLI subcommand.
// Returns a human-readable report; sets ok=false on any violation.
// defect_fixture routes decodes through a deliberately broken wrapper so
// harness tests can confirm the suite actually fails on a bad decoder.
std::string codec_selftest_report(bool& ok, std::uint64_t seed = 0x5ecdedULL,
                                  bool defect_fixture = false);

}  // namespace hrmlab
