#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrmlab/codecs.hpp"
#include "hrmlab/stats.hpp"
#include "hrmlab/toml_lite.hpp"

namespace hrmlab {

inline constexpr double kMonthHours = 730.0;
inline constexpr std::chrono::milliseconds kMonth{
    std::int64_t(kMonthHours * 3600.0 * 1000.0)};

enum class SoftwareResponse { None, CrashOnDetect, ReloadCleanCopy, DropQuery };
const char* software_response_name(SoftwareResponse r);
std::optional<SoftwareResponse> software_response_from_name(
    const std::string& s);

std::optional<ProtectionTechnique> protection_technique_from_name(
    const std::string& s);

enum class Granularity { WholeSystem, PerRegion };

struct MemoryGrade {
  enum class Kind { Tested, LessTested };
  Kind kind = Kind::Tested;
  double error_rate_multiplier = 1.0;
  double cost_per_gb_factor = 1.0;

  static MemoryGrade tested() { return {}; }
  // multiplier >= 1, cost factor in (0,1]; throws ConfigError otherwise.
  static MemoryGrade less_tested(double multiplier, double cost_factor);
};
const char* memory_grade_name(MemoryGrade::Kind k);

struct ModelRegion {
  std::string name;
  RegionKind kind = RegionKind::Heap;
  double size_gb = 0.0;
  bool disk_backed = false;
};

struct RegionAssignment {
  ProtectionTechnique technique = ProtectionTechnique::None;
  SoftwareResponse response = SoftwareResponse::None;
  MemoryGrade grade;
};

struct DesignPoint {
  std::string name;
  Granularity granularity = Granularity::WholeSystem;
  // One entry per model region; whole_system designs carry the same
  // assignment replicated so evaluation never branches on granularity.
  std::map<std::string, RegionAssignment> regions;
};

struct ErrorModel {
  // FIT per Mbit: failures per 1e9 device-hours per 2^20 bits.
  double soft_rate_fit_per_mbit = 0.0;
  // Expected new stuck-at bits per GB-month.
  double hard_incidence_per_gb_month = 0.0;
  // Fraction of events touching more than one bit (treated as 2-bit for
  // code behavior: SEC-DED detects but cannot correct, parity misses).
  double multi_bit_fraction = 0.0;
};

struct CostModel {
  double memory_fraction_of_server_cost = 0.1;
  double ecc_capacity_overhead = 8.0 / 64.0;
  double parity_capacity_overhead = 1.0 / 64.0;
  double ecc_market_premium = 1.2;
  std::vector<ModelRegion> regions;
  std::chrono::milliseconds mttr{10 * 60 * 1000};
  std::chrono::milliseconds recovery_latency{100};
  // Grade parameter table; shipped values come from the calibration file.
  MemoryGrade tested_grade = MemoryGrade::tested();
  MemoryGrade less_tested_grade = MemoryGrade::tested();

  const ModelRegion* region(const std::string& name) const;
  double total_gb() const;
};

struct Arrivals {
  double soft_events = 0.0;
  double hard_events = 0.0;
};
// Expected Poisson arrivals over `duration_hours` in a region of
// `region_gb` gigabytes (1 GB = 8192 Mbit).
Arrivals expected_error_arrivals(const ErrorModel& em, const MemoryGrade& g,
                                 double region_gb, double duration_hours);

struct RegionReport {
  std::string region;
  ProtectionTechnique technique = ProtectionTechnique::None;
  SoftwareResponse response = SoftwareResponse::None;
  MemoryGrade::Kind grade = MemoryGrade::Kind::Tested;
  double soft_events = 0.0;
  double hard_events = 0.0;
  double crashes = 0.0;
  double reloads = 0.0;
  double dropped = 0.0;
  double incorrect_index = 0.0;
  double memory_cost_units = 0.0;
};

struct ReliabilityCostReport {
  std::string design;
  double crashes_per_month = 0.0;
  double reload_events_per_month = 0.0;
  double dropped_per_month = 0.0;
  // Exposure index: expected mismatched answers per 10^9 queries,
  // accumulated over resident undetected errors. Comparative, not a
  // calendar rate; see docs/formats.md.
  double incorrect_per_billion = 0.0;
  double availability = 0.0;
  double memory_cost_units = 0.0;
  double baseline_cost_units = 0.0;
  double memory_cost_savings_pct = 0.0;
  double server_cost_savings_pct = 0.0;
  std::vector<RegionReport> regions;
};

// 1 - crashes * mttr / month, clamped to [0,1]. Month is 730 hours.
double availability(double crashes_per_month, std::chrono::milliseconds mttr);

// Throws ConfigError when the design breaks its own invariants against the
// model regions: reload_clean_copy on a non-disk-backed region, response
// none with a technique other than none, or a region set mismatch.
void validate_design(const DesignPoint& dp, const CostModel& cm);

// Analytic evaluation. The profile supplies P(crash | unmasked error) and
// the incorrect-exposure rate per (region kind, soft/hard class), pooled
// across workloads. Missing rows throw EvalError naming the region.
ReliabilityCostReport evaluate_design(const DesignPoint& dp,
                                      const VulnerabilityProfile& prof,
                                      const ErrorModel& em,
                                      const CostModel& cm);

struct MaxTolerable {
  bool unbounded = false;
  double errors_per_month = 0.0;
};
// Inverts the availability formula: allowed crashes = (1 - target) * month
// / mttr, divided by the crash probability per error.
MaxTolerable max_tolerable_errors(double target_availability,
                                  std::chrono::milliseconds mttr,
                                  double p_crash_given_error);
// Design-level variant; the error model supplies the soft/hard arrival mix
// needed to weight the design's per-region crash probabilities.
MaxTolerable max_tolerable_errors(const DesignPoint& dp,
                                  const VulnerabilityProfile& prof,
                                  double target_availability,
                                  const CostModel& cm, const ErrorModel& em);

struct MonteCarloResult {
  double mean_crashes_per_month = 0.0;
  double stderr_of_mean = 0.0;
  std::uint64_t months = 0;
};
// Discrete simulation of the same model: Poisson arrivals, per-event dice
// for multiplicity, detection, and crash. Deterministic for a seed.
MonteCarloResult simulate_crashes(const DesignPoint& dp,
                                  const VulnerabilityProfile& prof,
                                  const ErrorModel& em, const CostModel& cm,
                                  std::uint64_t months, std::uint64_t seed);

ErrorModel error_model_from_toml(const TomlTable& t);
ErrorModel error_model_from_file(const std::string& path);
CostModel cost_model_from_toml(const TomlTable& t);
CostModel cost_model_from_file(const std::string& path);
// Calibration profiles: synthetic sufficient statistics per cell.
VulnerabilityProfile profile_from_toml(const TomlTable& t);
VulnerabilityProfile profile_from_file(const std::string& path);
DesignPoint design_point_from_toml(const TomlTable& t, const CostModel& cm);
DesignPoint design_point_from_file(const std::string& path,
                                   const CostModel& cm);

// The five named design points, instantiated against the model's regions
// and grade table: typical-server, consumer-pc, less-tested,
// detect-recover, detect-recover-l.
std::vector<DesignPoint> builtin_design_points(const CostModel& cm);

std::string report_json(const ReliabilityCostReport& r);

}  // namespace hrmlab
