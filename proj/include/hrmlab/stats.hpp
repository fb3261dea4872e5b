#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrmlab/campaign.hpp"

namespace hrmlab {

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double p) const { return lo <= p && p <= hi; }
};

// 95% Wilson score interval. z is pinned to a literal so results are
// bit-stable across platforms. trials == 0 is the caller's no-data case
// and returns the vacuous [0,1].
WilsonInterval wilson95(std::uint64_t successes, std::uint64_t trials);

struct CellKey {
  std::string workload;
  RegionKind region = RegionKind::Heap;
  ErrorMode mode = ErrorMode::Soft;
  auto operator<=>(const CellKey&) const = default;
};

// Sufficient statistics for one (workload, region, mode) cell. Merging two
// cells is plain addition, which is what makes profile merging associative.
struct CellStats {
  std::uint64_t crash = 0;
  std::uint64_t incorrect = 0;
  std::uint64_t masked = 0;
  std::uint64_t hang = 0;
  std::uint64_t infra_invalid = 0;
  // Incorrect-rate denominator: queries from trials whose full output was
  // actually compared, i.e. Incorrect and Masked trials. Crashed and hung
  // trials never produce a complete compared output, and their failure is
  // already captured by their own fractions.
  std::uint64_t mismatched_queries = 0;
  std::uint64_t queries_observed = 0;

  std::uint64_t valid() const { return crash + incorrect + masked + hang; }
  double crash_probability() const;
  WilsonInterval crash_interval() const;
  double incorrect_fraction() const;
  double masked_fraction() const;
  double hang_fraction() const;
  // Mismatched queries per 10^9 queries, extrapolated from the observed
  // per-query rate. nullopt when no queries were observed.
  std::optional<double> incorrect_per_billion() const;
  std::optional<WilsonInterval> incorrect_interval_per_billion() const;
  // Measurement ceiling reported instead of a hard zero when no mismatch
  // was seen: fewer than 1 per queries_observed, scaled to a billion.
  std::optional<double> rate_ceiling_per_billion() const;

  CellStats& operator+=(const CellStats& o);
};

struct VulnerabilityProfile {
  std::map<CellKey, CellStats> cells;
  // nullptr = no data for that cell; cells are never zero-filled.
  const CellStats* cell(const std::string& workload, RegionKind region,
                        ErrorMode mode) const;
};

VulnerabilityProfile build_profile(const CampaignLogView& log);
VulnerabilityProfile merge_profiles(const VulnerabilityProfile& a,
                                    const VulnerabilityProfile& b);

// log10(max rate / min positive rate) across cells' incorrect rates.
// Zeros are excluded from the ratio but counted, since a zero only means
// the rate sits below the measurement floor.
struct Spread {
  bool defined = false;
  double decades = 0.0;
  std::size_t zero_rates = 0;
};
Spread spread_orders_of_magnitude(const std::vector<double>& rates);
Spread spread_orders_of_magnitude(
    const std::vector<VulnerabilityProfile>& profiles);

// Nearest-rank quantiles: the value at rank ceil(p/100 * N) of the sorted
// sample, 1-indexed. Empty input is the caller's no-data case.
struct Quantiles {
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};
Quantiles nearest_rank_quantiles(std::vector<double> xs);

struct CrashModeSummary {
  std::uint64_t crashes = 0;
  Quantiles time_ms;
  Quantiles queries_before_crash;
};
struct TimeToCrashSummary {
  std::map<ErrorMode, CrashModeSummary> by_mode;
  bool empty() const { return by_mode.empty(); }
};
TimeToCrashSummary time_to_crash_summary(const CampaignLogView& log);

// One row per cell; column names are stable:
// workload,region,mode,trials_valid,infra_invalid,crashes,incorrect_trials,
// masked,hangs,crash_probability,crash_lo,crash_hi,queries_observed,
// mismatched_queries,incorrect_per_billion,incorrect_lo_per_billion,
// incorrect_hi_per_billion,rate_ceiling_per_billion,masked_fraction,
// hang_fraction
std::string profile_csv(const VulnerabilityProfile& p);
std::string profile_json(const VulnerabilityProfile& p);

}  // namespace hrmlab
