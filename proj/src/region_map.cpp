#include "hrmlab/region_map.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "hrmlab/errors.hpp"
#include "hrmlab/rng.hpp"

#include "json.hpp"

namespace hrmlab {

const char* region_kind_name(RegionKind k) {
  switch (k) {
    case RegionKind::Heap: return "heap";
    case RegionKind::Stack: return "stack";
    case RegionKind::Private: return "private";
    case RegionKind::MappedFile: return "mapped-file";
    case RegionKind::Other: return "other";
  }
  return "other";
}

std::optional<RegionKind> region_kind_from_name(const std::string& s) {
  if (s == "heap") return RegionKind::Heap;
  if (s == "stack") return RegionKind::Stack;
  if (s == "private") return RegionKind::Private;
  if (s == "mapped-file") return RegionKind::MappedFile;
  if (s == "other") return RegionKind::Other;
  return std::nullopt;
}

std::uint64_t MemoryRegionMap::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& r : regions) total += r.length;
  return total;
}

namespace {

RegionKind infer_kind(const MemoryRegion& r) {
  if (r.label == "[heap]") return RegionKind::Heap;
  if (r.label.rfind("[stack", 0) == 0) return RegionKind::Stack;
  if (r.label.empty() && r.write && !r.shared) return RegionKind::Private;
  if (!r.label.empty() && r.label.front() != '[') return RegionKind::MappedFile;
  return RegionKind::Other;
}

bool parse_hex_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 16);
  return ec == std::errc() && p == s.data() + s.size();
}

[[noreturn]] void line_fail(std::size_t lineno, const std::string& what) {
  throw ParseError("region map: line " + std::to_string(lineno) + ": " + what);
}

}  // namespace

MemoryRegionMap parse_region_map(const std::string& raw_text) {
  MemoryRegionMap map;
  std::istringstream in(raw_text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Skip blank lines; everything else must parse.
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::istringstream ls(line);
    std::string range, perms, offset, dev, inode;
    if (!(ls >> range >> perms >> offset >> dev >> inode))
      line_fail(lineno, "expected 'start-end perms offset dev inode [path]'");
    std::string label;
    std::getline(ls, label);
    std::size_t a = label.find_first_not_of(" \t");
    label = (a == std::string::npos) ? "" : label.substr(a);

    std::size_t dash = range.find('-');
    if (dash == std::string::npos) line_fail(lineno, "bad address range");
    MemoryRegion r;
    std::uint64_t start = 0, end = 0;
    if (!parse_hex_u64(range.substr(0, dash), start) ||
        !parse_hex_u64(range.substr(dash + 1), end))
      line_fail(lineno, "bad hex address in '" + range + "'");
    if (end <= start) line_fail(lineno, "region end precedes start");
    r.start = start;
    r.length = end - start;

    if (perms.size() < 4) line_fail(lineno, "bad perms '" + perms + "'");
    auto flag = [&](std::size_t i, char on) -> bool {
      if (perms[i] == on) return true;
      if (perms[i] == '-') return false;
      line_fail(lineno, "bad perms '" + perms + "'");
    };
    r.read = flag(0, 'r');
    r.write = flag(1, 'w');
    r.exec = flag(2, 'x');
    if (perms[3] == 's')
      r.shared = true;
    else if (perms[3] == 'p')
      r.shared = false;
    else
      line_fail(lineno, "bad perms '" + perms + "'");

    std::uint64_t dummy = 0;
    if (!parse_hex_u64(offset, dummy)) line_fail(lineno, "bad offset field");
    r.label = label;
    r.kind = infer_kind(r);
    if (r.start + r.length < r.start) line_fail(lineno, "address overflow");
    map.regions.push_back(std::move(r));
  }

  std::sort(map.regions.begin(), map.regions.end(),
            [](const MemoryRegion& a, const MemoryRegion& b) {
              return a.start < b.start;
            });
  for (std::size_t i = 1; i < map.regions.size(); ++i) {
    if (map.regions[i].start < map.regions[i - 1].end()) {
      std::ostringstream ss;
      ss << "region map: overlapping regions at 0x" << std::hex
         << map.regions[i - 1].start << " and 0x" << map.regions[i].start;
      throw StructuralError(ss.str());
    }
  }
  return map;
}

namespace {

std::string hex_padded(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << v;
  std::string s = ss.str();
  if (s.size() < 8) s = std::string(8 - s.size(), '0') + s;
  return s;
}

}  // namespace

std::string format_region(const MemoryRegion& r) {
  std::string s = hex_padded(r.start) + "-" + hex_padded(r.end()) + " ";
  s += r.read ? 'r' : '-';
  s += r.write ? 'w' : '-';
  s += r.exec ? 'x' : '-';
  s += r.shared ? 's' : 'p';
  s += " 00000000 00:00 0";
  if (!r.label.empty()) s += " " + r.label;
  return s;
}

std::string format_region_map(const MemoryRegionMap& m) {
  std::string out;
  for (const auto& r : m.regions) {
    out += format_region(r);
    out += '\n';
  }
  return out;
}

std::string region_map_to_json(const MemoryRegionMap& m) {
  nlohmann::ordered_json j;
  j["schema"] = "hrmlab-region-map-v1";
  j["snapshot_unix_ms"] = m.snapshot_unix_ms;
  j["regions"] = nlohmann::ordered_json::array();
  for (const auto& r : m.regions) {
    nlohmann::ordered_json e;
    std::ostringstream start;
    start << "0x" << std::hex << r.start;
    e["start"] = start.str();
    e["length"] = r.length;
    e["kind"] = region_kind_name(r.kind);
    std::string perms;
    perms += r.read ? 'r' : '-';
    perms += r.write ? 'w' : '-';
    perms += r.exec ? 'x' : '-';
    perms += r.shared ? 's' : 'p';
    e["perms"] = perms;
    e["label"] = r.label;
    j["regions"].push_back(std::move(e));
  }
  return j.dump();
}

MemoryRegionMap region_map_from_json(const std::string& json_text) {
  try {
    nlohmann::json j = nlohmann::json::parse(json_text);
    if (j.value("schema", std::string{}) != "hrmlab-region-map-v1")
      throw ParseError("region map json: missing or unknown schema tag");
    MemoryRegionMap m;
    m.snapshot_unix_ms = j.value("snapshot_unix_ms", std::int64_t{0});
    for (const auto& e : j.at("regions")) {
      MemoryRegion r;
      std::string start = e.at("start").get<std::string>();
      if (start.rfind("0x", 0) == 0) start = start.substr(2);
      if (!parse_hex_u64(start, r.start))
        throw ParseError("region map json: bad start '" + start + "'");
      r.length = e.at("length").get<std::uint64_t>();
      auto kind = region_kind_from_name(e.at("kind").get<std::string>());
      if (!kind) throw ParseError("region map json: bad kind");
      r.kind = *kind;
      std::string perms = e.at("perms").get<std::string>();
      if (perms.size() != 4) throw ParseError("region map json: bad perms");
      r.read = perms[0] == 'r';
      r.write = perms[1] == 'w';
      r.exec = perms[2] == 'x';
      r.shared = perms[3] == 's';
      r.label = e.value("label", std::string{});
      m.regions.push_back(std::move(r));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("region map json: ") + e.what());
  }
}

MemoryRegionMap capture_process_region_map(int pid) {
  std::string path = "/proc/" + std::to_string(pid) + "/maps";
  std::ifstream f(path);
  if (!f) throw SessionError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_region_map(ss.str());
}

bool target_valid(const MemoryRegionMap& map, const InjectionTarget& t) {
  if (t.region_index >= map.regions.size()) return false;
  if (t.bit > 7) return false;
  return t.offset < map.regions[t.region_index].length;
}

std::vector<InjectionTarget> sample_addresses(
    const MemoryRegionMap& map, std::optional<RegionKind> kind_filter,
    std::uint64_t n, std::uint64_t seed,
    const std::optional<std::string>& label_filter) {
  if (n == 0) throw ConfigError("sample_addresses: n must be >= 1");

  // Filtered regions with their cumulative bit-position prefix sums.
  std::vector<std::uint32_t> region_idx;
  std::vector<std::uint64_t> prefix_bits{0};
  for (std::uint32_t i = 0; i < map.regions.size(); ++i) {
    const auto& r = map.regions[i];
    if (kind_filter && r.kind != *kind_filter) continue;
    if (label_filter && r.label != *label_filter) continue;
    std::uint64_t bits = r.length * 8;
    if (bits / 8 != r.length)
      throw CapacityError("sample_addresses: region bit domain overflows");
    std::uint64_t next = prefix_bits.back() + bits;
    if (next < prefix_bits.back())
      throw CapacityError("sample_addresses: total bit domain overflows");
    region_idx.push_back(i);
    prefix_bits.push_back(next);
  }
  if (region_idx.empty())
    throw EmptyDomainError("sample_addresses: no region matches the filter");

  const std::uint64_t domain = prefix_bits.back();
  if (n > domain)
    throw CapacityError("sample_addresses: requested " + std::to_string(n) +
                        " targets but only " + std::to_string(domain) +
                        " distinct byte-bit positions exist");

  // Floyd's algorithm draws a uniform n-subset with O(n) memory, then a
  // shuffle removes the position-ordering bias of the insertion sequence.
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  std::vector<std::uint64_t> picks;
  picks.reserve(n);
  for (std::uint64_t j = domain - n; j < domain; ++j) {
    std::uint64_t t = rng.bounded(j + 1);
    std::uint64_t pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    picks.push_back(pick);
  }
  rng.shuffle(picks);

  std::vector<InjectionTarget> out;
  out.reserve(n);
  for (std::uint64_t pos : picks) {
    auto it = std::upper_bound(prefix_bits.begin(), prefix_bits.end(), pos);
    std::size_t slot = static_cast<std::size_t>(it - prefix_bits.begin()) - 1;
    std::uint64_t rel = pos - prefix_bits[slot];
    InjectionTarget t;
    t.region_index = region_idx[slot];
    t.offset = rel / 8;
    t.bit = static_cast<std::uint8_t>(rel % 8);
    out.push_back(t);
  }
  return out;
}

}  // namespace hrmlab
