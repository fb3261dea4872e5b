#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hrmlab/backend.hpp"
#include "hrmlab/errors.hpp"
#include "hrmlab/region_map.hpp"

namespace hrmlab {

// Thrown when a workload access leaves the arena (or a declared segment
// bound). Trials classify it as a crash, mirroring what the same wild
// access would do to a real process.
class ArenaAccessViolation : public AccessError {
 public:
  explicit ArenaAccessViolation(const std::string& msg) : AccessError(msg) {}
};

struct ArenaSegment {
  std::string name;
  RegionKind tag = RegionKind::Heap;  // heap / private analog for statistics
  std::uint64_t offset = 0;           // within the arena byte array
  std::uint64_t size = 0;
};

// Per-segment access statistics gathered from the instrumented entry points.
struct SegmentTraffic {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
};

// Deterministic in-process injection substrate. Bundled workloads route
// their injectable state through an Arena so single-bit campaigns can be
// enumerated exhaustively and replayed bit-for-bit.
class Arena {
 public:
  // Segments are laid out in declaration order, 64-byte aligned.
  explicit Arena(const std::vector<std::pair<std::string, RegionKind>>& plan,
                 const std::vector<std::uint64_t>& sizes);

  std::uint64_t size() const { return bytes_.size(); }
  const std::vector<ArenaSegment>& segments() const { return segments_; }
  const ArenaSegment& segment(const std::string& name) const;
  std::uint64_t segment_offset(const std::string& name) const {
    return segment(name).offset;
  }

  // Instrumented accessors used by workloads. Bounds violations throw
  // ArenaAccessViolation; reads re-assert any stuck-at pins they touch.
  std::uint8_t read_u8(std::uint64_t off);
  void write_u8(std::uint64_t off, std::uint8_t v);
  std::uint16_t read_u16(std::uint64_t off);
  void write_u16(std::uint64_t off, std::uint16_t v);
  std::uint32_t read_u32(std::uint64_t off);
  void write_u32(std::uint64_t off, std::uint32_t v);
  std::uint64_t read_u64(std::uint64_t off);
  void write_u64(std::uint64_t off, std::uint64_t v);

  // Raw (uninstrumented) peek/poke for the backend and snapshots.
  std::uint8_t peek(std::uint64_t off) const;
  void poke(std::uint64_t off, std::uint8_t v);

  // Stuck-at pin management. Pins re-assert on every instrumented access
  // of the containing byte (exact stuck-at semantics).
  void pin_bit(std::uint64_t off, std::uint8_t bit, bool stuck_value);
  void clear_pins();
  // Re-applies pins on one byte; returns true if the byte changed.
  bool reassert_pins(std::uint64_t off);

  const std::map<std::string, SegmentTraffic>& traffic() const { return traffic_; }
  std::uint64_t segment_switches() const { return segment_switches_; }
  void reset_traffic();

  // Versioned binary snapshot: magic "HRMA", version u16 LE, u64 LE payload
  // length, then the raw arena bytes.
  std::string snapshot() const;
  void restore(const std::string& blob);

  std::uint64_t accesses() const { return access_count_; }

  // Observer for pin re-assertions that changed a byte; the owning session
  // uses it to keep receipts complete.
  using ReassertObserver =
      std::function<void(std::uint64_t off, std::uint8_t pre, std::uint8_t post)>;
  void set_reassert_observer(ReassertObserver obs) { on_reassert_ = std::move(obs); }

 private:
  struct Pin {
    std::uint8_t mask = 0;   // which bits are pinned
    std::uint8_t value = 0;  // stuck values under the mask
  };

  void check_bounds(std::uint64_t off, std::uint64_t len) const;
  void note_access(std::uint64_t off, std::uint64_t len, bool is_write);
  std::uint64_t read_wide(std::uint64_t off, unsigned n);
  void write_wide(std::uint64_t off, unsigned n, std::uint64_t v);
  const ArenaSegment* segment_of(std::uint64_t off) const;

  std::vector<std::uint8_t> bytes_;
  std::vector<ArenaSegment> segments_;
  std::map<std::uint64_t, Pin> pins_;
  std::map<std::string, SegmentTraffic> traffic_;
  ReassertObserver on_reassert_;
  std::uint64_t access_count_ = 0;
  std::uint64_t segment_switches_ = 0;
  int last_segment_ = -1;
};

// BackendSession over an Arena. The pseudo region map places each segment
// at a stable virtual base so InjectionTargets and sampling work exactly as
// they do against a live process map; region labels carry segment names.
class ArenaSession : public BackendSession {
 public:
  explicit ArenaSession(std::shared_ptr<Arena> arena);

  const MemoryRegionMap& region_map() const override { return map_; }
  std::uint8_t read_byte(const InjectionTarget& t) override;
  void write_byte(const InjectionTarget& t, std::uint8_t value) override;
  InjectionReceipt inject_soft(const ErrorSpec& spec) override;
  InjectionReceipt inject_hard(const ErrorSpec& spec) override;
  Event watch_events(std::chrono::milliseconds timeout) override;
  bool live() const override { return live_; }
  const std::vector<InjectionReceipt>& receipts() const override {
    return receipts_;
  }

  // The trial driver reports the workload's fate through these.
  void post_event(Event e);
  void mark_terminated() { live_ = false; }

  // Called by the arena on every pin re-assertion that changed a byte, so
  // receipts stay complete. Wired up via callback in the constructor.
  Arena& arena() { return *arena_; }

  std::uint64_t arena_offset(const InjectionTarget& t) const;

 private:
  std::shared_ptr<Arena> arena_;
  MemoryRegionMap map_;
  std::vector<InjectionReceipt> receipts_;
  std::vector<Event> pending_;
  bool live_ = true;
};

// Virtual base address segments are presented at in the pseudo map.
constexpr std::uint64_t kArenaVirtualBase = 0x7f0000000000ULL;

MemoryRegionMap arena_pseudo_region_map(const Arena& arena);

}  // namespace hrmlab
