#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hrmlab/arena.hpp"
#include "hrmlab/frames.hpp"

namespace hrmlab {

// Identifies one bundled workload plus everything that makes its dataset,
// query stream and golden output reproducible. Identical specs give
// byte-identical datasets, queries and responses.
struct WorkloadSpec {
  std::string id;  // mini-kv | mini-search | mini-graph

  std::uint64_t dataset_seed = 1;
  std::uint64_t query_seed = 2;
  // 0 picks the workload default: 1,000 queries for mini-kv/mini-search,
  // one full traversal pass for mini-graph.
  std::uint64_t queries = 0;

  // mini-kv sizing
  std::uint64_t kv_keys = 512;
  std::uint64_t kv_value_len = 128;
  // mini-search sizing
  std::uint64_t search_docs = 128;
  // mini-graph sizing
  std::uint64_t graph_nodes = 256;
};

// A workload is split client/server like the system it stands in for: the
// request stream is a pure function of the spec (the client side), while
// serve() answers one request reading only arena state (the server side).
// Corrupting the arena therefore perturbs responses, never the questions.
class Workload {
 public:
  virtual ~Workload() = default;

  virtual const WorkloadSpec& spec() const = 0;
  virtual int version() const = 0;

  // Arena layout. Sizes are fixed by the spec before any arena exists.
  virtual std::vector<std::pair<std::string, RegionKind>> segment_plan() const = 0;
  virtual std::vector<std::uint64_t> segment_sizes() const = 0;

  // Writes the dataset into a fresh arena through instrumented accesses.
  virtual void build(Arena& arena) = 0;

  virtual std::uint64_t query_count() const = 0;
  virtual std::string request(std::uint64_t i) const = 0;

  // Serves one request against the arena. May throw ArenaAccessViolation
  // (classified as a crash) or StepBudgetExceeded (classified as a hang).
  virtual std::string serve(Arena& arena, const std::string& request) = 0;

  std::shared_ptr<Arena> make_arena() const {
    return std::make_shared<Arena>(segment_plan(), segment_sizes());
  }
};

// Throws ConfigError for unknown ids or size parameters outside the
// documented bounds (kv_keys 1..65536, kv_value_len 1..4096,
// search_docs 2..4096, graph_nodes 2..65536, queries <= 1,000,000).
std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec);

const std::vector<std::string>& workload_ids();

// Error-free reference execution: builds a fresh arena, serves the whole
// query stream twice, and verifies the two passes agree byte for byte
// (WorkloadDefectError otherwise).
struct GoldenResult {
  std::vector<std::string> responses;
  std::string response_sha256_hex;  // over the framed response stream
  std::string dataset_sha256_hex;   // over the arena snapshot after build
};

GoldenResult golden_run(const WorkloadSpec& spec);

// Golden file round trip (frames.hpp format). The meta frame records the
// spec, workload version and dataset checksum as JSON.
std::string golden_file_pack(const WorkloadSpec& spec, const GoldenResult& r);
struct GoldenLoaded {
  WorkloadSpec spec;
  int workload_version = 0;
  std::string dataset_sha256_hex;
  std::vector<std::string> responses;
};
GoldenLoaded golden_file_unpack(const std::string& blob);

// Spec <-> JSON for campaign metadata and golden meta frames.
std::string workload_spec_to_json(const WorkloadSpec& spec);
WorkloadSpec workload_spec_from_json(const std::string& json_text);

}  // namespace hrmlab
