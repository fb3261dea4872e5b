#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrmlab/backend.hpp"
#include "hrmlab/toml_lite.hpp"
#include "hrmlab/workloads.hpp"

namespace hrmlab {

// How trial output is judged against the golden stream.
struct Comparator {
  enum class Kind { ByteExact, PerQueryExact, TopKOverlap };
  Kind kind = Kind::PerQueryExact;
  std::uint32_t k = 10;     // TopKOverlap only
  double threshold = 1.0;   // TopKOverlap only

  static Comparator from_string(const std::string& s);  // ConfigError on junk
  std::string to_string() const;
};

// Count of queries judged incorrect. Truncated actual streams (crash) are
// compared over the served prefix. Top-k judges a query incorrect when
// |actual ∩ golden top-k| / k < threshold, with k capped to the golden
// list's length so identical short lists stay correct.
std::uint64_t compare_output(const std::vector<std::string>& actual,
                             const std::vector<std::string>& golden,
                             const Comparator& cmp);

struct TrialConfig {
  WorkloadSpec spec;
  std::string backend = "arena";  // "arena" | "debugger"
  std::vector<std::string> target_argv;  // debugger backend: serve command
  std::vector<ErrorSpec> errors;
  std::chrono::milliseconds timeout{60000};
  Comparator comparator;
  std::uint64_t seed = 0;
};

struct TrialOutcome {
  enum class Kind { Crash, Incorrect, Masked, Hang, InfraInvalid };
  Kind kind = Kind::Masked;
  int signal = 0;     // Crash via signal
  int exit_code = 0;  // Crash via nonzero exit
  std::chrono::milliseconds time_to_crash{0};
  std::uint64_t queries_served = 0;
  std::uint64_t mismatched = 0;
  std::uint64_t total_queries = 0;
  std::string infra_reason;
  std::vector<InjectionReceipt> receipts;
};

const char* trial_outcome_name(TrialOutcome::Kind k);
std::optional<TrialOutcome::Kind> trial_outcome_from_name(const std::string&);

// Target process fate, as classify_outcome consumes it.
struct ExitStatus {
  enum class Kind { Exited, Signaled, Running };
  Kind kind = Kind::Exited;
  int code = 0;
};

// Pure classifier: signaled or nonzero exit → Crash; still running at the
// timeout → Hang; clean exit → Incorrect/Masked by comparator count.
TrialOutcome classify_outcome(const ExitStatus& status,
                              const std::vector<std::string>& output,
                              const std::vector<std::string>& golden,
                              std::chrono::milliseconds elapsed,
                              std::chrono::milliseconds timeout,
                              const Comparator& cmp);

// Runs the five-step loop once: build/spawn, inject per specs, drive the
// query stream, watch for crash or hang, compare against golden. Backend
// failures surface as InfraInvalid, never exceptions.
TrialOutcome run_trial(const TrialConfig& config,
                       const std::vector<std::string>& golden);

// Debugger trials whose error targets were sampled against another process
// instance's map: targets are translated by absolute address before
// injection (layouts repeat because spawned targets run unrandomized).
TrialOutcome run_trial_with_map(const TrialConfig& config,
                                const std::vector<std::string>& golden,
                                const MemoryRegionMap& sampled_map);

// A campaign: one trial per sampled target × mode.
struct SamplingPlan {
  WorkloadSpec spec;                      // [workload]
  std::string backend = "arena";          // [backend] kind
  std::vector<std::string> target_argv;   // [backend] argv (debugger)
  std::optional<RegionKind> region_filter;    // [sampling] region
  std::optional<std::string> label_filter;    // [sampling] label
  bool exhaustive = false;                // [sampling] exhaustive
  std::uint64_t targets = 0;              // [sampling] targets (when not exhaustive)
  std::vector<ErrorMode> modes{ErrorMode::Soft};  // [sampling] modes
  std::uint64_t seed = 1;                 // [sampling] seed
  InjectTrigger trigger = InjectTrigger::after_queries_done(1);
  std::chrono::milliseconds reassert_interval{1};
  std::chrono::milliseconds trial_timeout{60000};  // [limits]
  double max_infra_rate = 0.05;           // [limits]
  Comparator comparator;                  // [limits] comparator
};

SamplingPlan plan_from_toml(const TomlTable& t);
SamplingPlan plan_from_file(const std::string& path);
// Canonical serialized form; equal plans hash equal regardless of key order.
std::string plan_canonical(const SamplingPlan& p);
std::string plan_hash(const SamplingPlan& p);  // SHA-256 hex of canonical form

struct CampaignCounts {
  std::uint64_t crash = 0;
  std::uint64_t incorrect = 0;
  std::uint64_t masked = 0;
  std::uint64_t hang = 0;
  std::uint64_t infra_invalid = 0;

  std::uint64_t total() const {
    return crash + incorrect + masked + hang + infra_invalid;
  }
  std::uint64_t valid() const { return total() - infra_invalid; }
};

struct CampaignResult {
  std::string log_path;
  CampaignCounts counts;
  std::uint64_t planned_trials = 0;
  bool complete = false;  // all planned trials present in the log
  double infra_rate = 0.0;
};

struct RunOptions {
  int parallelism = 1;
  // Stop after this many newly executed trials (0 = unlimited). The log
  // stays resumable; used by interruption tests and --max-trials.
  std::uint64_t max_new_trials = 0;
};

// Executes the plan, appending to log_path (JSON Lines, one record per
// trial, seq strictly increasing). An existing log resumes: the plan hash
// must match or the call refuses with IntegrityError. Equal plans produce
// identical logs (modulo timestamp fields) at any parallelism.
CampaignResult run_campaign(const SamplingPlan& plan, const RunOptions& opts,
                            const std::string& log_path);

// Parsed-back view of a campaign log for reporting and statistics.
struct LogTrialRecord {
  std::uint64_t seq = 0;
  InjectionTarget target;
  std::string region_label;
  RegionKind region_kind = RegionKind::Heap;
  ErrorMode mode = ErrorMode::Soft;
  TrialOutcome outcome;  // receipts included
  std::int64_t ts_unix_ms = 0;
};

struct CampaignLogView {
  std::string plan_hash;
  std::string backend;
  WorkloadSpec spec;
  std::string golden_sha256;
  std::string dataset_sha256;
  std::uint64_t planned_trials = 0;
  std::vector<LogTrialRecord> trials;
  bool has_summary = false;
  CampaignCounts counts;
};

CampaignLogView read_campaign_log(const std::string& path);

// The log with seq/timestamp-independent content only, for byte-equality
// checks across interrupted/resumed/parallel runs.
std::string campaign_log_canonical(const std::string& path);

}  // namespace hrmlab
