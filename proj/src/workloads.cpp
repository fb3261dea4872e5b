#include "hrmlab/workloads.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "hrmlab/errors.hpp"
#include "hrmlab/rng.hpp"
#include "hrmlab/sha256.hpp"

#include "json.hpp"

namespace hrmlab {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_step(std::uint64_t h, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

const char kAlphabet64[] =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789+/";

std::string random_chars(Rng& rng, std::size_t n, const char* alphabet,
                         std::size_t alphabet_len) {
  std::string s(n, '\0');
  for (auto& c : s) c = alphabet[rng.bounded(alphabet_len)];
  return s;
}

std::string hex16(std::uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = d[v & 0xf];
    v >>= 4;
  }
  return s;
}

// ---------------------------------------------------------------------------
// mini-kv: hash-indexed key/value store. Index entries are 16 bytes
// (key hash u64, value offset u32, value length u32) sorted by hash for
// binary search; values live as one concatenated byte run; each lookup
// stages the value through a private scratch buffer before responding.

class MiniKv final : public Workload {
 public:
  explicit MiniKv(const WorkloadSpec& spec) : spec_(spec) {
    Rng drng(spec_.dataset_seed);
    std::set<std::uint64_t> hashes;
    keys_.reserve(spec_.kv_keys);
    values_.reserve(spec_.kv_keys);
    for (std::uint64_t k = 0; k < spec_.kv_keys; ++k) {
      std::string key;
      std::uint64_t h = 0;
      do {
        key = random_chars(drng, 12, "abcdefghijklmnopqrstuvwxyz", 26);
        h = fnv1a64(key);
      } while (!hashes.insert(h).second);
      keys_.push_back(std::move(key));
      values_.push_back(random_chars(drng, spec_.kv_value_len, kAlphabet64, 64));
    }
    // Index rows sorted by hash; offsets keep key-generation order.
    order_.resize(spec_.kv_keys);
    for (std::uint32_t i = 0; i < spec_.kv_keys; ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
      return fnv1a64(keys_[a]) < fnv1a64(keys_[b]);
    });

    Rng qrng(spec_.query_seed);
    requests_.reserve(query_count());
    for (std::uint64_t q = 0; q < query_count(); ++q) {
      if (qrng.bounded(10) == 0) {
        // 13-char key cannot equal any stored 12-char key.
        requests_.push_back("GET zz" +
                            random_chars(qrng, 11, "abcdefghijklmnopqrstuvwxyz", 26));
      } else {
        requests_.push_back("GET " + keys_[qrng.bounded(spec_.kv_keys)]);
      }
    }
  }

  const WorkloadSpec& spec() const override { return spec_; }
  int version() const override { return 1; }

  std::vector<std::pair<std::string, RegionKind>> segment_plan() const override {
    return {{"index", RegionKind::Heap},
            {"values", RegionKind::Heap},
            {"scratch", RegionKind::Private}};
  }
  std::vector<std::uint64_t> segment_sizes() const override {
    return {spec_.kv_keys * 16, spec_.kv_keys * spec_.kv_value_len,
            spec_.kv_value_len};
  }

  void build(Arena& a) override {
    const std::uint64_t index = a.segment_offset("index");
    const std::uint64_t values = a.segment_offset("values");
    for (std::uint64_t i = 0; i < spec_.kv_keys; ++i) {
      std::uint32_t k = order_[i];
      a.write_u64(index + i * 16, fnv1a64(keys_[k]));
      a.write_u32(index + i * 16 + 8, k * std::uint32_t(spec_.kv_value_len));
      a.write_u32(index + i * 16 + 12, std::uint32_t(spec_.kv_value_len));
    }
    for (std::uint64_t k = 0; k < spec_.kv_keys; ++k)
      for (std::uint64_t i = 0; i < spec_.kv_value_len; ++i)
        a.write_u8(values + k * spec_.kv_value_len + i,
                   std::uint8_t(values_[k][i]));
  }

  std::uint64_t query_count() const override {
    return spec_.queries ? spec_.queries : 1000;
  }
  std::string request(std::uint64_t i) const override { return requests_.at(i); }

  std::string serve(Arena& a, const std::string& req) override {
    if (req.rfind("GET ", 0) != 0) return "ERR bad-request";
    const std::string key = req.substr(4);
    const std::uint64_t h = fnv1a64(key);
    const std::uint64_t index = a.segment_offset("index");
    const std::uint64_t values = a.segment_offset("values");
    const std::uint64_t scratch = a.segment_offset("scratch");

    std::uint64_t lo = 0, hi = spec_.kv_keys;
    while (lo < hi) {
      std::uint64_t mid = lo + (hi - lo) / 2;
      if (a.read_u64(index + mid * 16) < h)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo >= spec_.kv_keys || a.read_u64(index + lo * 16) != h)
      return "NOT_FOUND";
    std::uint64_t off = a.read_u32(index + lo * 16 + 8);
    std::uint64_t len = a.read_u32(index + lo * 16 + 12);
    for (std::uint64_t i = 0; i < len; ++i)
      a.write_u8(scratch + i, a.read_u8(values + off + i));
    std::string out(len, '\0');
    for (std::uint64_t i = 0; i < len; ++i)
      out[i] = char(a.read_u8(scratch + i));
    return out;
  }

 private:
  WorkloadSpec spec_;
  std::vector<std::string> keys_;
  std::vector<std::string> values_;
  std::vector<std::uint32_t> order_;
  std::vector<std::string> requests_;
};

// ---------------------------------------------------------------------------
// mini-search: inverted index over a fixed 100-term vocabulary. The lexicon
// maps term id to (postings offset, document frequency); postings are
// (doc id, term frequency) pairs sorted by doc. Two-term queries score
// tf * (65536 / (1 + df)) per matching term and return the top-10 doc ids;
// per-query working state lives in a private arena segment.

constexpr std::uint64_t kVocab = 100;
constexpr std::uint64_t kDocTerms = 20;
constexpr unsigned kTopK = 10;

class MiniSearch final : public Workload {
 public:
  explicit MiniSearch(const WorkloadSpec& spec) : spec_(spec) {
    Rng drng(spec_.dataset_seed);
    std::vector<std::vector<std::uint32_t>> tf(
        kVocab, std::vector<std::uint32_t>(spec_.search_docs, 0));
    for (std::uint64_t d = 0; d < spec_.search_docs; ++d)
      for (std::uint64_t i = 0; i < kDocTerms; ++i)
        tf[drng.bounded(kVocab)][d]++;
    lexicon_.resize(kVocab);
    for (std::uint64_t t = 0; t < kVocab; ++t) {
      lexicon_[t].first = std::uint32_t(postings_.size());
      for (std::uint64_t d = 0; d < spec_.search_docs; ++d)
        if (tf[t][d]) postings_.push_back({std::uint32_t(d), tf[t][d]});
      lexicon_[t].second = std::uint32_t(postings_.size()) - lexicon_[t].first;
    }

    Rng qrng(spec_.query_seed);
    requests_.reserve(query_count());
    for (std::uint64_t q = 0; q < query_count(); ++q) {
      std::uint64_t a = qrng.bounded(kVocab);
      std::uint64_t b = (a + 1 + qrng.bounded(kVocab - 1)) % kVocab;
      requests_.push_back("SEARCH " + term_name(a) + " " + term_name(b));
    }
  }

  static std::string term_name(std::uint64_t t) {
    std::string s = "term";
    s += char('0' + (t / 10) % 10);
    s += char('0' + t % 10);
    return s;
  }

  const WorkloadSpec& spec() const override { return spec_; }
  int version() const override { return 1; }

  std::vector<std::pair<std::string, RegionKind>> segment_plan() const override {
    return {{"lexicon", RegionKind::Heap},
            {"postings", RegionKind::Heap},
            {"query-state", RegionKind::Private}};
  }
  std::vector<std::uint64_t> segment_sizes() const override {
    return {kVocab * 8, std::uint64_t(postings_.size()) * 8, 96};
  }

  void build(Arena& a) override {
    const std::uint64_t lex = a.segment_offset("lexicon");
    const std::uint64_t post = a.segment_offset("postings");
    for (std::uint64_t t = 0; t < kVocab; ++t) {
      a.write_u32(lex + t * 8, lexicon_[t].first);
      a.write_u32(lex + t * 8 + 4, lexicon_[t].second);
    }
    for (std::uint64_t i = 0; i < postings_.size(); ++i) {
      a.write_u32(post + i * 8, postings_[i].first);
      a.write_u32(post + i * 8 + 4, postings_[i].second);
    }
  }

  std::uint64_t query_count() const override {
    return spec_.queries ? spec_.queries : 1000;
  }
  std::string request(std::uint64_t i) const override { return requests_.at(i); }

  std::string serve(Arena& a, const std::string& req) override {
    std::istringstream in(req);
    std::string verb, t1, t2;
    in >> verb >> t1 >> t2;
    std::uint64_t id1 = 0, id2 = 0;
    if (verb != "SEARCH" || !parse_term(t1, id1) || !parse_term(t2, id2))
      return "ERR bad-term";

    const std::uint64_t lex = a.segment_offset("lexicon");
    const std::uint64_t post = a.segment_offset("postings");
    const std::uint64_t qs = a.segment_offset("query-state");
    a.write_u32(qs + 0, std::uint32_t(id1));
    a.write_u32(qs + 4, std::uint32_t(id2));

    std::uint64_t off1 = a.read_u32(lex + id1 * 8);
    std::uint64_t df1 = a.read_u32(lex + id1 * 8 + 4);
    std::uint64_t off2 = a.read_u32(lex + id2 * 8);
    std::uint64_t df2 = a.read_u32(lex + id2 * 8 + 4);
    const std::uint32_t idf1 = std::uint32_t(65536 / (1 + df1));
    const std::uint32_t idf2 = std::uint32_t(65536 / (1 + df2));

    // Top-k slots in query-state: count at +88, (doc, score) pairs at +8.
    a.write_u32(qs + 88, 0);
    auto consider = [&](std::uint32_t doc, std::uint32_t score) {
      if (score == 0) return;
      std::uint32_t n = a.read_u32(qs + 88);
      if (n > kTopK) n = kTopK;  // defensive against corrupted count
      std::uint32_t pos = n;
      for (std::uint32_t p = 0; p < n; ++p) {
        std::uint32_t d = a.read_u32(qs + 8 + p * 8);
        std::uint32_t s = a.read_u32(qs + 8 + p * 8 + 4);
        if (score > s || (score == s && doc < d)) {
          pos = p;
          break;
        }
      }
      if (pos >= kTopK) return;
      std::uint32_t last = n < kTopK ? n : kTopK - 1;
      for (std::uint32_t p = last; p > pos; --p) {
        a.write_u32(qs + 8 + p * 8, a.read_u32(qs + 8 + (p - 1) * 8));
        a.write_u32(qs + 8 + p * 8 + 4, a.read_u32(qs + 8 + (p - 1) * 8 + 4));
      }
      a.write_u32(qs + 8 + pos * 8, doc);
      a.write_u32(qs + 8 + pos * 8 + 4, score);
      if (n < kTopK) a.write_u32(qs + 88, n + 1);
    };

    std::uint64_t i = 0, j = 0;
    while (i < df1 || j < df2) {
      std::uint64_t d1 = ~0ull, d2 = ~0ull;
      std::uint32_t f1 = 0, f2 = 0;
      if (i < df1) {
        d1 = a.read_u32(post + (off1 + i) * 8);
        f1 = a.read_u32(post + (off1 + i) * 8 + 4);
      }
      if (j < df2) {
        d2 = a.read_u32(post + (off2 + j) * 8);
        f2 = a.read_u32(post + (off2 + j) * 8 + 4);
      }
      if (d1 < d2) {
        consider(std::uint32_t(d1), f1 * idf1);
        ++i;
      } else if (d2 < d1) {
        consider(std::uint32_t(d2), f2 * idf2);
        ++j;
      } else {
        consider(std::uint32_t(d1), f1 * idf1 + f2 * idf2);
        ++i;
        ++j;
      }
    }

    std::uint32_t n = a.read_u32(qs + 88);
    if (n > kTopK) n = kTopK;
    std::string out;
    for (std::uint32_t p = 0; p < n; ++p) {
      if (p) out += ' ';
      out += std::to_string(a.read_u32(qs + 8 + p * 8));
    }
    return out;
  }

 private:
  static bool parse_term(const std::string& s, std::uint64_t& id) {
    if (s.size() != 6 || s.rfind("term", 0) != 0) return false;
    if (s[4] < '0' || s[4] > '9' || s[5] < '0' || s[5] > '9') return false;
    id = std::uint64_t(s[4] - '0') * 10 + std::uint64_t(s[5] - '0');
    return id < kVocab;
  }

  WorkloadSpec spec_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> lexicon_;   // off, df
  std::vector<std::pair<std::uint32_t, std::uint32_t>> postings_;  // doc, tf
  std::vector<std::string> requests_;
};

// ---------------------------------------------------------------------------
// mini-graph: CSR adjacency (offsets in a private segment, edge targets on
// the heap analog) traversed breadth-first over every component in root
// order. The visited bitmap and work queue live in a private segment so
// traversal control state is injectable too.

class MiniGraph final : public Workload {
 public:
  explicit MiniGraph(const WorkloadSpec& spec) : spec_(spec) {
    Rng drng(spec_.dataset_seed);
    const std::uint64_t n = spec_.graph_nodes;
    offsets_.resize(n + 1);
    for (std::uint64_t u = 0; u < n; ++u) {
      offsets_[u] = std::uint32_t(edges_.size());
      std::uint64_t degree = 2 + drng.bounded(5);
      for (std::uint64_t k = 0; k < degree; ++k)
        edges_.push_back(std::uint32_t(drng.bounded(n)));
    }
    offsets_[n] = std::uint32_t(edges_.size());
  }

  const WorkloadSpec& spec() const override { return spec_; }
  int version() const override { return 1; }

  std::vector<std::pair<std::string, RegionKind>> segment_plan() const override {
    return {{"offsets", RegionKind::Private},
            {"edges", RegionKind::Heap},
            {"visit", RegionKind::Private}};
  }
  std::vector<std::uint64_t> segment_sizes() const override {
    const std::uint64_t n = spec_.graph_nodes;
    return {(n + 1) * 4, std::uint64_t(edges_.size()) * 4,
            bitmap_bytes() + n * 4};
  }

  void build(Arena& a) override {
    const std::uint64_t off = a.segment_offset("offsets");
    const std::uint64_t edg = a.segment_offset("edges");
    for (std::uint64_t u = 0; u < offsets_.size(); ++u)
      a.write_u32(off + u * 4, offsets_[u]);
    for (std::uint64_t e = 0; e < edges_.size(); ++e)
      a.write_u32(edg + e * 4, edges_[e]);
  }

  std::uint64_t query_count() const override {
    return spec_.queries ? spec_.queries : 1;
  }
  std::string request(std::uint64_t) const override { return "TRAVERSE"; }

  std::string serve(Arena& a, const std::string& req) override {
    if (req != "TRAVERSE") return "ERR bad-request";
    const std::uint64_t n = spec_.graph_nodes;
    const std::uint64_t off = a.segment_offset("offsets");
    const std::uint64_t edg = a.segment_offset("edges");
    const std::uint64_t visit = a.segment_offset("visit");
    const std::uint64_t queue = visit + bitmap_bytes();

    for (std::uint64_t b = 0; b < bitmap_bytes(); ++b) a.write_u8(visit + b, 0);

    const std::uint64_t budget = 16 * (n + edges_.size()) + 1024;
    std::uint64_t steps = 0;
    auto step = [&] {
      if (++steps > budget)
        throw StepBudgetExceeded("mini-graph: traversal exceeded step budget");
    };
    auto visited = [&](std::uint64_t v) {
      return (a.read_u8(visit + v / 8) >> (v % 8)) & 1;
    };
    auto mark = [&](std::uint64_t v) {
      a.write_u8(visit + v / 8,
                 std::uint8_t(a.read_u8(visit + v / 8) | (1u << (v % 8))));
    };

    std::uint64_t visited_count = 0, edge_sum = 0;
    std::uint64_t order_hash = 14695981039346656037ull;
    for (std::uint64_t root = 0; root < n; ++root) {
      if (visited(root)) continue;
      std::uint64_t head = 0, tail = 0;
      mark(root);
      a.write_u32(queue + tail * 4, std::uint32_t(root));
      ++tail;
      while (head < tail) {
        step();
        std::uint64_t u = a.read_u32(queue + head * 4);
        ++head;
        ++visited_count;
        order_hash = fnv1a64_step(order_hash, std::uint32_t(u));
        std::uint64_t lo = a.read_u32(off + u * 4);
        std::uint64_t hi = a.read_u32(off + (u + 1) * 4);
        for (std::uint64_t e = lo; e < hi; ++e) {
          step();
          std::uint64_t v = a.read_u32(edg + e * 4);
          edge_sum += v;
          if (!visited(v)) {
            mark(v);
            a.write_u32(queue + tail * 4, std::uint32_t(v));
            ++tail;
          }
        }
      }
    }
    return "visited " + std::to_string(visited_count) + " edgesum " +
           std::to_string(edge_sum) + " orderhash " + hex16(order_hash);
  }

 private:
  std::uint64_t bitmap_bytes() const { return (spec_.graph_nodes + 7) / 8; }

  WorkloadSpec spec_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> edges_;
};

void validate_spec(const WorkloadSpec& s) {
  auto in = [](std::uint64_t v, std::uint64_t lo, std::uint64_t hi) {
    return v >= lo && v <= hi;
  };
  if (s.queries > 1000000)
    throw ConfigError("workload: queries above 1,000,000");
  if (s.id == "mini-kv") {
    if (!in(s.kv_keys, 1, 65536)) throw ConfigError("mini-kv: kv_keys out of 1..65536");
    if (!in(s.kv_value_len, 1, 4096))
      throw ConfigError("mini-kv: kv_value_len out of 1..4096");
  } else if (s.id == "mini-search") {
    if (!in(s.search_docs, 2, 4096))
      throw ConfigError("mini-search: search_docs out of 2..4096");
  } else if (s.id == "mini-graph") {
    if (!in(s.graph_nodes, 2, 65536))
      throw ConfigError("mini-graph: graph_nodes out of 2..65536");
  } else {
    throw ConfigError("unknown workload id '" + s.id + "'");
  }
}

}  // namespace

std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec) {
  validate_spec(spec);
  if (spec.id == "mini-kv") return std::make_unique<MiniKv>(spec);
  if (spec.id == "mini-search") return std::make_unique<MiniSearch>(spec);
  return std::make_unique<MiniGraph>(spec);
}

const std::vector<std::string>& workload_ids() {
  static const std::vector<std::string> ids{"mini-kv", "mini-search",
                                            "mini-graph"};
  return ids;
}

GoldenResult golden_run(const WorkloadSpec& spec) {
  auto w = make_workload(spec);
  auto pass = [&](std::string* dataset_sha) {
    auto arena = w->make_arena();
    w->build(*arena);
    if (dataset_sha) *dataset_sha = Sha256::hex_of(arena->snapshot());
    std::vector<std::string> responses;
    responses.reserve(w->query_count());
    for (std::uint64_t q = 0; q < w->query_count(); ++q)
      responses.push_back(w->serve(*arena, w->request(q)));
    return responses;
  };
  GoldenResult r;
  r.responses = pass(&r.dataset_sha256_hex);
  std::vector<std::string> again = pass(nullptr);
  if (again != r.responses)
    throw WorkloadDefectError("golden run: two passes disagreed for workload " +
                              spec.id);
  std::string framed;
  for (const auto& resp : r.responses) append_frame(framed, resp);
  r.response_sha256_hex = Sha256::hex_of(framed);
  return r;
}

std::string workload_spec_to_json(const WorkloadSpec& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["dataset_seed"] = s.dataset_seed;
  j["query_seed"] = s.query_seed;
  j["queries"] = s.queries;
  j["kv_keys"] = s.kv_keys;
  j["kv_value_len"] = s.kv_value_len;
  j["search_docs"] = s.search_docs;
  j["graph_nodes"] = s.graph_nodes;
  return j.dump();
}

WorkloadSpec workload_spec_from_json(const std::string& json_text) {
  try {
    nlohmann::json j = nlohmann::json::parse(json_text);
    WorkloadSpec s;
    s.id = j.at("id").get<std::string>();
    s.dataset_seed = j.value("dataset_seed", std::uint64_t{1});
    s.query_seed = j.value("query_seed", std::uint64_t{2});
    s.queries = j.value("queries", std::uint64_t{0});
    s.kv_keys = j.value("kv_keys", std::uint64_t{512});
    s.kv_value_len = j.value("kv_value_len", std::uint64_t{128});
    s.search_docs = j.value("search_docs", std::uint64_t{128});
    s.graph_nodes = j.value("graph_nodes", std::uint64_t{256});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("workload spec json: ") + e.what());
  }
}

std::string golden_file_pack(const WorkloadSpec& spec, const GoldenResult& r) {
  nlohmann::ordered_json meta;
  meta["schema"] = "hrmlab-golden-v1";
  meta["spec"] = nlohmann::ordered_json::parse(workload_spec_to_json(spec));
  meta["workload_version"] = make_workload(spec)->version();
  meta["dataset_sha256"] = r.dataset_sha256_hex;
  meta["responses"] = r.responses.size();
  GoldenFile g;
  g.meta_json = meta.dump();
  g.responses = r.responses;
  return golden_pack(g);
}

GoldenLoaded golden_file_unpack(const std::string& blob) {
  GoldenFile g = golden_unpack(blob);
  try {
    nlohmann::json meta = nlohmann::json::parse(g.meta_json);
    if (meta.value("schema", std::string{}) != "hrmlab-golden-v1")
      throw ParseError("golden file: missing or unknown schema tag");
    GoldenLoaded out;
    out.spec = workload_spec_from_json(meta.at("spec").dump());
    out.workload_version = meta.value("workload_version", 0);
    out.dataset_sha256_hex = meta.value("dataset_sha256", std::string{});
    out.responses = std::move(g.responses);
    if (out.responses.size() != meta.value("responses", std::size_t{0}))
      throw IntegrityError("golden file: response count mismatch");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("golden meta json: ") + e.what());
  }
}

}  // namespace hrmlab
