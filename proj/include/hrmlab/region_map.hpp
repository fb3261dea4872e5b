#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hrmlab {

enum class RegionKind { Heap, Stack, Private, MappedFile, Other };

const char* region_kind_name(RegionKind k);
std::optional<RegionKind> region_kind_from_name(const std::string& s);

// One mapped region of a target's virtual address space.
//
// Kind inference for anonymous mappings is fixed: a writable private
// anonymous mapping is Private; "[heap]"/"[stack]" labels win; any named
// file is MappedFile; everything else (vdso, shared anon, guard pages,
// read-only anon) is Other.
struct MemoryRegion {
  std::uint64_t start = 0;
  std::uint64_t length = 0;
  RegionKind kind = RegionKind::Other;
  bool read = false;
  bool write = false;
  bool exec = false;
  bool shared = false;  // 's' vs 'p' in the perms column; drives inference
  std::string label;    // backing path, bracket tag, or allocator tag

  std::uint64_t end() const { return start + length; }
  bool contains(std::uint64_t addr) const { return addr >= start && addr < end(); }
};

struct MemoryRegionMap {
  std::vector<MemoryRegion> regions;
  std::int64_t snapshot_unix_ms = 0;

  std::uint64_t total_bytes() const;
};

// A single injectable bit position, relative to a region map.
struct InjectionTarget {
  std::uint32_t region_index = 0;
  std::uint64_t offset = 0;  // bytes within the region
  std::uint8_t bit = 0;      // 0..7 within the byte

  bool operator==(const InjectionTarget&) const = default;
};

// Parses the platform's per-process maps listing (one region per line:
// hex start-end, perms, offset, dev, inode, optional path). Regions come
// back sorted by start; overlaps raise StructuralError, malformed lines
// raise ParseError naming the line.
MemoryRegionMap parse_region_map(const std::string& raw_text);

// Canonical single-line form: zero-padded lowercase hex, zeroed
// offset/dev/inode (those fields are not retained), label appended when
// present. format(parse(x)) is idempotent.
std::string format_region(const MemoryRegion& r);
std::string format_region_map(const MemoryRegionMap& m);

// Stable-field-order JSON for logging and offline replay.
std::string region_map_to_json(const MemoryRegionMap& m);
MemoryRegionMap region_map_from_json(const std::string& json_text);

// Reads /proc/<pid>/maps.
MemoryRegionMap capture_process_region_map(int pid);

// Draws n unique byte-by-bit injection targets uniformly over the regions
// matching the filters (kind, and optionally an exact label). Equal seeds
// give byte-identical results. Throws EmptyDomainError when nothing
// matches and CapacityError when n exceeds the distinct positions.
std::vector<InjectionTarget> sample_addresses(
    const MemoryRegionMap& map, std::optional<RegionKind> kind_filter,
    std::uint64_t n, std::uint64_t seed,
    const std::optional<std::string>& label_filter = std::nullopt);

// Validates a target against a map (offset within region, bit in range).
bool target_valid(const MemoryRegionMap& map, const InjectionTarget& t);

}  // namespace hrmlab
