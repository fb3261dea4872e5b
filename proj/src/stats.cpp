#include "hrmlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace hrmlab {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {
constexpr double kZ95 = 1.959963984540054;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

WilsonInterval wilson95(std::uint64_t successes, std::uint64_t trials) {
  if (trials == 0) return {0.0, 1.0};
  const double n = double(trials);
  const double p = double(successes) / n;
  const double z2 = kZ95 * kZ95;
  const double den = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / den;
  const double half =
      kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den;
  // The bounds are exactly 0 and 1 at the extremes; don't let roundoff in
  // center +/- half pull them inside the point estimate.
  const double lo = successes == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = successes == trials ? 1.0 : std::min(1.0, center + half);
  return {lo, hi};
}

double CellStats::crash_probability() const {
  return valid() ? double(crash) / double(valid()) : 0.0;
}
WilsonInterval CellStats::crash_interval() const {
  return wilson95(crash, valid());
}
double CellStats::incorrect_fraction() const {
  return valid() ? double(incorrect) / double(valid()) : 0.0;
}
double CellStats::masked_fraction() const {
  return valid() ? double(masked) / double(valid()) : 0.0;
}
double CellStats::hang_fraction() const {
  return valid() ? double(hang) / double(valid()) : 0.0;
}
std::optional<double> CellStats::incorrect_per_billion() const {
  if (queries_observed == 0) return std::nullopt;
  return double(mismatched_queries) / double(queries_observed) * 1e9;
}
std::optional<WilsonInterval> CellStats::incorrect_interval_per_billion()
    const {
  if (queries_observed == 0) return std::nullopt;
  WilsonInterval w = wilson95(mismatched_queries, queries_observed);
  return WilsonInterval{w.lo * 1e9, w.hi * 1e9};
}
std::optional<double> CellStats::rate_ceiling_per_billion() const {
  if (queries_observed == 0 || mismatched_queries > 0) return std::nullopt;
  return 1e9 / double(queries_observed);
}

CellStats& CellStats::operator+=(const CellStats& o) {
  crash += o.crash;
  incorrect += o.incorrect;
  masked += o.masked;
  hang += o.hang;
  infra_invalid += o.infra_invalid;
  mismatched_queries += o.mismatched_queries;
  queries_observed += o.queries_observed;
  return *this;
}

const CellStats* VulnerabilityProfile::cell(const std::string& workload,
                                            RegionKind region,
                                            ErrorMode mode) const {
  auto it = cells.find(CellKey{workload, region, mode});
  return it == cells.end() ? nullptr : &it->second;
}

VulnerabilityProfile build_profile(const CampaignLogView& log) {
  VulnerabilityProfile p;
  for (const LogTrialRecord& t : log.trials) {
    CellStats& c = p.cells[CellKey{log.spec.id, t.region_kind, t.mode}];
    switch (t.outcome.kind) {
      case TrialOutcome::Kind::Crash:
        ++c.crash;
        break;
      case TrialOutcome::Kind::Incorrect:
        ++c.incorrect;
        c.mismatched_queries += t.outcome.mismatched;
        c.queries_observed += t.outcome.total_queries;
        break;
      case TrialOutcome::Kind::Masked:
        ++c.masked;
        c.queries_observed += t.outcome.total_queries;
        break;
      case TrialOutcome::Kind::Hang:
        ++c.hang;
        break;
      case TrialOutcome::Kind::InfraInvalid:
        ++c.infra_invalid;
        break;
    }
  }
  return p;
}

VulnerabilityProfile merge_profiles(const VulnerabilityProfile& a,
                                    const VulnerabilityProfile& b) {
  VulnerabilityProfile out = a;
  for (const auto& [k, v] : b.cells) out.cells[k] += v;
  return out;
}

Spread spread_orders_of_magnitude(const std::vector<double>& rates) {
  Spread s;
  double min_pos = 0.0, max_rate = 0.0;
  bool any_pos = false;
  for (double r : rates) {
    if (r <= 0.0) {
      ++s.zero_rates;
      continue;
    }
    if (!any_pos || r < min_pos) min_pos = r;
    if (!any_pos || r > max_rate) max_rate = r;
    any_pos = true;
  }
  if (!any_pos) return s;
  s.defined = true;
  s.decades = std::log10(max_rate / min_pos);
  return s;
}

Spread spread_orders_of_magnitude(
    const std::vector<VulnerabilityProfile>& profiles) {
  std::vector<double> rates;
  for (const auto& p : profiles)
    for (const auto& [k, c] : p.cells)
      if (auto r = c.incorrect_per_billion()) rates.push_back(*r);
  return spread_orders_of_magnitude(rates);
}

Quantiles nearest_rank_quantiles(std::vector<double> xs) {
  Quantiles q;
  if (xs.empty()) return q;
  std::sort(xs.begin(), xs.end());
  auto at = [&](double pct) {
    std::size_t rank = std::size_t(std::ceil(pct / 100.0 * double(xs.size())));
    if (rank == 0) rank = 1;
    return xs[rank - 1];
  };
  q.p10 = at(10);
  q.p50 = at(50);
  q.p90 = at(90);
  return q;
}

TimeToCrashSummary time_to_crash_summary(const CampaignLogView& log) {
  std::map<ErrorMode, std::pair<std::vector<double>, std::vector<double>>> by;
  for (const LogTrialRecord& t : log.trials) {
    if (t.outcome.kind != TrialOutcome::Kind::Crash) continue;
    auto& [times, queries] = by[t.mode];
    times.push_back(double(t.outcome.time_to_crash.count()));
    queries.push_back(double(t.outcome.queries_served));
  }
  TimeToCrashSummary s;
  for (auto& [mode, axes] : by) {
    CrashModeSummary m;
    m.crashes = axes.first.size();
    m.time_ms = nearest_rank_quantiles(std::move(axes.first));
    m.queries_before_crash = nearest_rank_quantiles(std::move(axes.second));
    s.by_mode[mode] = m;
  }
  return s;
}

std::string profile_csv(const VulnerabilityProfile& p) {
  std::ostringstream o;
  o << "workload,region,mode,trials_valid,infra_invalid,crashes,"
       "incorrect_trials,masked,hangs,crash_probability,crash_lo,crash_hi,"
       "queries_observed,mismatched_queries,incorrect_per_billion,"
       "incorrect_lo_per_billion,incorrect_hi_per_billion,"
       "rate_ceiling_per_billion,masked_fraction,hang_fraction\n";
  for (const auto& [k, c] : p.cells) {
    WilsonInterval ci = c.crash_interval();
    o << k.workload << ',' << region_kind_name(k.region) << ','
      << error_mode_name(k.mode) << ',' << c.valid() << ',' << c.infra_invalid
      << ',' << c.crash << ',' << c.incorrect << ',' << c.masked << ','
      << c.hang << ',' << fmt(c.crash_probability()) << ',' << fmt(ci.lo)
      << ',' << fmt(ci.hi) << ',' << c.queries_observed << ','
      << c.mismatched_queries << ',';
    if (auto r = c.incorrect_per_billion()) o << fmt(*r);
    o << ',';
    if (auto w = c.incorrect_interval_per_billion())
      o << fmt(w->lo) << ',' << fmt(w->hi) << ',';
    else
      o << ",,";
    if (auto ceil = c.rate_ceiling_per_billion()) o << fmt(*ceil);
    o << ',' << fmt(c.masked_fraction()) << ',' << fmt(c.hang_fraction())
      << '\n';
  }
  return o.str();
}

std::string profile_json(const VulnerabilityProfile& p) {
  ordered_json cells = json::array();
  for (const auto& [k, c] : p.cells) {
    ordered_json j;
    j["workload"] = k.workload;
    j["region"] = region_kind_name(k.region);
    j["mode"] = error_mode_name(k.mode);
    j["trials_valid"] = c.valid();
    j["infra_invalid"] = c.infra_invalid;
    j["crashes"] = c.crash;
    j["incorrect_trials"] = c.incorrect;
    j["masked"] = c.masked;
    j["hangs"] = c.hang;
    j["crash_probability"] = c.crash_probability();
    WilsonInterval ci = c.crash_interval();
    j["crash_wilson95"] = {ci.lo, ci.hi};
    j["queries_observed"] = c.queries_observed;
    j["mismatched_queries"] = c.mismatched_queries;
    if (auto r = c.incorrect_per_billion()) {
      j["incorrect_per_billion"] = *r;
      auto w = *c.incorrect_interval_per_billion();
      j["incorrect_wilson95_per_billion"] = {w.lo, w.hi};
    } else {
      j["incorrect_per_billion"] = nullptr;
    }
    if (auto ceil = c.rate_ceiling_per_billion())
      j["rate_ceiling_per_billion"] = *ceil;
    j["masked_fraction"] = c.masked_fraction();
    j["hang_fraction"] = c.hang_fraction();
    cells.push_back(std::move(j));
  }
  ordered_json out;
  out["schema"] = "hrmlab-profile-v1";
  out["cells"] = std::move(cells);
  return out.dump();
}

}  // namespace hrmlab
