// Independent reference implementations used as test oracles. Everything in
// here is written against the documented behavior only and must not call into
// the library code it checks.
#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

// xorshift128+ so test inputs never come from the RNG under test.
struct TestRng {
  uint64_t s0, s1;
  explicit TestRng(uint64_t seed);
  uint64_t next();
  uint32_t below(uint32_t n);  // modulo is fine for test inputs
};

// Reference model of a byte cell with stuck-at bits. Pins are applied on
// every access: reads return (raw & ~mask) | value, writes store the raw
// byte and the pinned bits immediately win again.
struct StuckByte {
  uint8_t raw = 0;
  uint8_t mask = 0;
  uint8_t value = 0;

  void pin(int bit, bool stuck_high);
  void write(uint8_t b);
  uint8_t read() const;
};

// Plain FNV-1a 64-bit, per the published constants.
uint64_t fnv1a64(const void* data, size_t len);
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Pearson chi-squared statistic for observed counts against a uniform
// expectation. Callers compare against a frozen critical value.
double chi2_uniform(const std::vector<uint64_t>& counts);

// 99.9th percentile chi-squared critical values for the dfs the tests use.
double chi2_crit_999(int df);

// Reference Wilson 95% score interval, written from the closed form.
void wilson95(uint64_t successes, uint64_t trials, double& lo, double& hi);

// Reference interpreter of the documented mini-kv lookup semantics, replayed
// over a raw arena image. Mirrors the byte-level access order (index binary
// search by hash, value staged through scratch) with arena-bounds checking,
// so a corrupted image yields exactly the response or out-of-bounds fate the
// instrumented workload would produce.
struct KvLayout {
  uint64_t index_off = 0;
  uint64_t key_count = 0;
  uint64_t values_off = 0;
  uint64_t scratch_off = 0;
  uint64_t arena_size = 0;
};

struct KvServeResult {
  bool crashed = false;
  std::string response;
};

KvServeResult kv_reference_serve(std::vector<uint8_t>& image, const KvLayout& l,
                                 const std::string& request);

// Full-trial oracle: serve every request over the (possibly corrupted)
// image; verdict is "crash" on any out-of-bounds access, else "incorrect"
// with the mismatch count against golden, else "masked".
struct KvTrialVerdict {
  std::string outcome;  // crash | incorrect | masked
  uint64_t mismatched = 0;
  uint64_t served = 0;
};

KvTrialVerdict kv_reference_trial(std::vector<uint8_t> image, const KvLayout& l,
                                  const std::vector<std::string>& requests,
                                  const std::vector<std::string>& golden);

}  // namespace oracle
