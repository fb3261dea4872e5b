#include "hrmlab/arena.hpp"

#include <chrono>
#include <cstring>
#include <sstream>

namespace hrmlab {

const char* error_mode_name(ErrorMode m) {
  switch (m) {
    case ErrorMode::Soft: return "soft";
    case ErrorMode::HardStuck0: return "hard-stuck-at-0";
    case ErrorMode::HardStuck1: return "hard-stuck-at-1";
    case ErrorMode::HardStuckCurrent: return "hard-stuck-at-current";
  }
  return "soft";
}

std::optional<ErrorMode> error_mode_from_name(const std::string& s) {
  if (s == "soft") return ErrorMode::Soft;
  if (s == "hard-stuck-at-0") return ErrorMode::HardStuck0;
  if (s == "hard-stuck-at-1") return ErrorMode::HardStuck1;
  if (s == "hard-stuck-at-current" || s == "hard") return ErrorMode::HardStuckCurrent;
  return std::nullopt;
}

const char* receipt_action_name(InjectionReceipt::Action a) {
  switch (a) {
    case InjectionReceipt::Action::Flip: return "flip";
    case InjectionReceipt::Action::Pin: return "pin";
    case InjectionReceipt::Action::Reassert: return "reassert";
  }
  return "flip";
}

std::int64_t unix_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Arena::Arena(const std::vector<std::pair<std::string, RegionKind>>& plan,
             const std::vector<std::uint64_t>& sizes) {
  if (plan.size() != sizes.size())
    throw ConfigError("arena: segment plan/sizes length mismatch");
  std::uint64_t off = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (sizes[i] == 0) throw ConfigError("arena: zero-size segment " + plan[i].first);
    if (traffic_.count(plan[i].first))
      throw ConfigError("arena: duplicate segment name " + plan[i].first);
    ArenaSegment s;
    s.name = plan[i].first;
    s.tag = plan[i].second;
    s.offset = off;
    s.size = sizes[i];
    segments_.push_back(s);
    traffic_[s.name] = SegmentTraffic{};
    off += sizes[i];
    off = (off + 63) & ~std::uint64_t(63);
  }
  bytes_.assign(off == 0 ? 0 : off, 0);
}

const ArenaSegment& Arena::segment(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw ConfigError("arena: unknown segment '" + name + "'");
}

void Arena::check_bounds(std::uint64_t off, std::uint64_t len) const {
  if (off + len > bytes_.size() || off + len < off) {
    std::ostringstream ss;
    ss << "arena access violation: offset 0x" << std::hex << off << " len "
       << std::dec << len << " exceeds arena size " << bytes_.size();
    throw ArenaAccessViolation(ss.str());
  }
}

const ArenaSegment* Arena::segment_of(std::uint64_t off) const {
  for (const auto& s : segments_)
    if (off >= s.offset && off < s.offset + s.size) return &s;
  return nullptr;
}

void Arena::note_access(std::uint64_t off, std::uint64_t len, bool is_write) {
  ++access_count_;
  const ArenaSegment* s = segment_of(off);
  if (!s) return;
  int idx = int(s - segments_.data());
  if (last_segment_ >= 0 && idx != last_segment_) ++segment_switches_;
  last_segment_ = idx;
  auto& t = traffic_[s->name];
  if (is_write) {
    ++t.writes;
    t.bytes_written += len;
  } else {
    ++t.reads;
    t.bytes_read += len;
  }
}

bool Arena::reassert_pins(std::uint64_t off) {
  auto it = pins_.find(off);
  if (it == pins_.end()) return false;
  std::uint8_t pre = bytes_[off];
  std::uint8_t post = std::uint8_t((pre & ~it->second.mask) | it->second.value);
  if (post == pre) return false;
  bytes_[off] = post;
  if (on_reassert_) on_reassert_(off, pre, post);
  return true;
}

std::uint8_t Arena::read_u8(std::uint64_t off) {
  check_bounds(off, 1);
  reassert_pins(off);
  note_access(off, 1, false);
  return bytes_[off];
}

void Arena::write_u8(std::uint64_t off, std::uint8_t v) {
  check_bounds(off, 1);
  note_access(off, 1, true);
  bytes_[off] = v;
  // Stuck-at dominance: the pinned value wins against every write.
  reassert_pins(off);
}

// Wider accesses count as one access of n bytes in the traffic stats,
// little-endian over the byte cells, pins re-asserted per byte.
std::uint64_t Arena::read_wide(std::uint64_t off, unsigned n) {
  check_bounds(off, n);
  for (unsigned i = 0; i < n; ++i) reassert_pins(off + i);
  note_access(off, n, false);
  std::uint64_t v = 0;
  for (unsigned i = 0; i < n; ++i) v |= std::uint64_t(bytes_[off + i]) << (8 * i);
  return v;
}

void Arena::write_wide(std::uint64_t off, unsigned n, std::uint64_t v) {
  check_bounds(off, n);
  note_access(off, n, true);
  for (unsigned i = 0; i < n; ++i) {
    bytes_[off + i] = std::uint8_t(v >> (8 * i));
    reassert_pins(off + i);
  }
}

std::uint16_t Arena::read_u16(std::uint64_t off) {
  return std::uint16_t(read_wide(off, 2));
}

void Arena::write_u16(std::uint64_t off, std::uint16_t v) { write_wide(off, 2, v); }

std::uint32_t Arena::read_u32(std::uint64_t off) {
  return std::uint32_t(read_wide(off, 4));
}

void Arena::write_u32(std::uint64_t off, std::uint32_t v) { write_wide(off, 4, v); }

std::uint64_t Arena::read_u64(std::uint64_t off) { return read_wide(off, 8); }

void Arena::write_u64(std::uint64_t off, std::uint64_t v) { write_wide(off, 8, v); }

std::uint8_t Arena::peek(std::uint64_t off) const {
  check_bounds(off, 1);
  return bytes_[off];
}

void Arena::poke(std::uint64_t off, std::uint8_t v) {
  check_bounds(off, 1);
  bytes_[off] = v;
}

void Arena::pin_bit(std::uint64_t off, std::uint8_t bit, bool stuck_value) {
  check_bounds(off, 1);
  if (bit > 7) throw ConfigError("arena: pin bit out of range");
  Pin& p = pins_[off];
  std::uint8_t m = std::uint8_t(1u << bit);
  p.mask |= m;
  p.value = std::uint8_t((p.value & ~m) | (stuck_value ? m : 0));
}

void Arena::clear_pins() { pins_.clear(); }

void Arena::reset_traffic() {
  for (auto& [_, t] : traffic_) t = SegmentTraffic{};
  segment_switches_ = 0;
  last_segment_ = -1;
}

std::string Arena::snapshot() const {
  std::string out;
  out.reserve(bytes_.size() + 14);
  out += "HRMA";
  const std::uint16_t version = 1;
  out += char(version & 0xff);
  out += char(version >> 8);
  std::uint64_t len = bytes_.size();
  for (int i = 0; i < 8; ++i) out += char((len >> (8 * i)) & 0xff);
  out.append(reinterpret_cast<const char*>(bytes_.data()), bytes_.size());
  return out;
}

void Arena::restore(const std::string& blob) {
  if (blob.size() < 14 || blob.compare(0, 4, "HRMA") != 0)
    throw ParseError("arena snapshot: bad magic");
  std::uint16_t version =
      std::uint16_t(std::uint8_t(blob[4])) | (std::uint16_t(std::uint8_t(blob[5])) << 8);
  if (version != 1) throw ParseError("arena snapshot: unsupported version");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(std::uint8_t(blob[6 + i])) << (8 * i);
  if (blob.size() != 14 + len)
    throw ParseError("arena snapshot: truncated payload");
  if (len != bytes_.size())
    throw StructuralError("arena snapshot: size mismatch with this arena");
  std::memcpy(bytes_.data(), blob.data() + 14, len);
}

MemoryRegionMap arena_pseudo_region_map(const Arena& arena) {
  MemoryRegionMap m;
  m.snapshot_unix_ms = 0;  // pseudo map is deterministic
  for (const auto& s : arena.segments()) {
    MemoryRegion r;
    r.start = kArenaVirtualBase + s.offset;
    r.length = s.size;
    r.kind = s.tag;
    r.read = true;
    r.write = true;
    r.exec = false;
    r.shared = false;
    r.label = s.name;
    m.regions.push_back(r);
  }
  return m;
}

ArenaSession::ArenaSession(std::shared_ptr<Arena> arena)
    : arena_(std::move(arena)), map_(arena_pseudo_region_map(*arena_)) {
  arena_->set_reassert_observer(
      [this](std::uint64_t off, std::uint8_t pre, std::uint8_t post) {
        InjectionReceipt r;
        r.action = InjectionReceipt::Action::Reassert;
        // Map the raw offset back to the owning segment for the receipt.
        for (std::uint32_t i = 0; i < map_.regions.size(); ++i) {
          const auto& seg = arena_->segments()[i];
          if (off >= seg.offset && off < seg.offset + seg.size) {
            r.target.region_index = i;
            r.target.offset = off - seg.offset;
            break;
          }
        }
        r.pre_byte = pre;
        r.post_byte = post;
        r.unix_ms = unix_now_ms();
        receipts_.push_back(r);
      });
}

std::uint64_t ArenaSession::arena_offset(const InjectionTarget& t) const {
  if (t.region_index >= arena_->segments().size())
    throw AccessError("arena session: bad region index");
  const auto& seg = arena_->segments()[t.region_index];
  if (t.offset >= seg.size)
    throw AccessError("arena session: offset beyond segment '" + seg.name + "'");
  return seg.offset + t.offset;
}

std::uint8_t ArenaSession::read_byte(const InjectionTarget& t) {
  if (!live_) throw SessionError("arena session: terminated");
  return arena_->peek(arena_offset(t));
}

void ArenaSession::write_byte(const InjectionTarget& t, std::uint8_t value) {
  if (!live_) throw SessionError("arena session: terminated");
  arena_->poke(arena_offset(t), value);
}

InjectionReceipt ArenaSession::inject_soft(const ErrorSpec& spec) {
  if (!live_) throw SessionError("arena session: terminated");
  if (spec.mode != ErrorMode::Soft)
    throw ConfigError("inject_soft: spec mode is not soft");
  if (spec.target.bit > 7) throw ConfigError("inject_soft: bit out of range");
  std::uint64_t off = arena_offset(spec.target);
  InjectionReceipt r;
  r.action = InjectionReceipt::Action::Flip;
  r.target = spec.target;
  r.mode = spec.mode;
  r.pre_byte = arena_->peek(off);
  arena_->poke(off, std::uint8_t(r.pre_byte ^ (1u << spec.target.bit)));
  r.post_byte = arena_->peek(off);
  r.unix_ms = unix_now_ms();
  receipts_.push_back(r);
  return r;
}

InjectionReceipt ArenaSession::inject_hard(const ErrorSpec& spec) {
  if (!live_) throw SessionError("arena session: terminated");
  if (!is_hard_mode(spec.mode))
    throw ConfigError("inject_hard: spec mode is not a hard variant");
  if (spec.target.bit > 7) throw ConfigError("inject_hard: bit out of range");
  std::uint64_t off = arena_offset(spec.target);
  std::uint8_t pre = arena_->peek(off);
  bool stuck = false;
  switch (spec.mode) {
    case ErrorMode::HardStuck0: stuck = false; break;
    case ErrorMode::HardStuck1: stuck = true; break;
    case ErrorMode::HardStuckCurrent:
      stuck = (pre >> spec.target.bit) & 1;
      break;
    case ErrorMode::Soft: break;
  }
  arena_->pin_bit(off, spec.target.bit, stuck);
  InjectionReceipt r;
  r.action = InjectionReceipt::Action::Pin;
  r.target = spec.target;
  r.mode = spec.mode;
  r.pre_byte = pre;
  std::uint8_t mask = std::uint8_t(1u << spec.target.bit);
  arena_->poke(off, std::uint8_t((pre & ~mask) | (stuck ? mask : 0)));
  r.post_byte = arena_->peek(off);
  r.unix_ms = unix_now_ms();
  receipts_.push_back(r);
  return r;
}

void ArenaSession::post_event(Event e) { pending_.push_back(e); }

Event ArenaSession::watch_events(std::chrono::milliseconds) {
  // The arena target runs synchronously inside the trial driver, so events
  // are either already queued or will never arrive within the timeout.
  if (pending_.empty()) return Event{Event::Kind::Timeout, 0};
  Event e = pending_.front();
  pending_.erase(pending_.begin());
  return e;
}

}  // namespace hrmlab
