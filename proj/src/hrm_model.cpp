#include "hrmlab/hrm_model.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "hrmlab/errors.hpp"
#include "hrmlab/rng.hpp"

namespace hrmlab {

using ordered_json = nlohmann::ordered_json;

const char* software_response_name(SoftwareResponse r) {
  switch (r) {
    case SoftwareResponse::None: return "none";
    case SoftwareResponse::CrashOnDetect: return "crash-on-detect";
    case SoftwareResponse::ReloadCleanCopy: return "reload-clean-copy";
    case SoftwareResponse::DropQuery: return "drop-query";
  }
  return "none";
}

std::optional<SoftwareResponse> software_response_from_name(
    const std::string& s) {
  for (SoftwareResponse r :
       {SoftwareResponse::None, SoftwareResponse::CrashOnDetect,
        SoftwareResponse::ReloadCleanCopy, SoftwareResponse::DropQuery})
    if (s == software_response_name(r)) return r;
  return std::nullopt;
}

std::optional<ProtectionTechnique> protection_technique_from_name(
    const std::string& s) {
  for (ProtectionTechnique t :
       {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord,
        ProtectionTechnique::Secded7264})
    if (s == protection_technique_name(t)) return t;
  return std::nullopt;
}

const char* memory_grade_name(MemoryGrade::Kind k) {
  return k == MemoryGrade::Kind::Tested ? "tested" : "less-tested";
}

MemoryGrade MemoryGrade::less_tested(double multiplier, double cost_factor) {
  if (multiplier < 1.0)
    throw ConfigError("memory grade: less-tested multiplier must be >= 1");
  if (!(cost_factor > 0.0) || cost_factor > 1.0)
    throw ConfigError("memory grade: cost factor must be in (0, 1]");
  return {Kind::LessTested, multiplier, cost_factor};
}

const ModelRegion* CostModel::region(const std::string& name) const {
  for (const ModelRegion& r : regions)
    if (r.name == name) return &r;
  return nullptr;
}

double CostModel::total_gb() const {
  double t = 0.0;
  for (const ModelRegion& r : regions) t += r.size_gb;
  return t;
}

Arrivals expected_error_arrivals(const ErrorModel& em, const MemoryGrade& g,
                                 double region_gb, double duration_hours) {
  if (region_gb <= 0.0 || duration_hours <= 0.0)
    throw ConfigError("error arrivals: region size and duration must be > 0");
  Arrivals a;
  const double mbit = region_gb * 8192.0;  // 1 GB = 8 * 2^30 bits = 8192 Mbit
  a.soft_events = em.soft_rate_fit_per_mbit * g.error_rate_multiplier * mbit *
                  duration_hours / 1e9;
  a.hard_events = em.hard_incidence_per_gb_month * g.error_rate_multiplier *
                  region_gb * (duration_hours / kMonthHours);
  return a;
}

double availability(double crashes_per_month, std::chrono::milliseconds mttr) {
  const double downtime = crashes_per_month * double(mttr.count());
  const double frac = 1.0 - downtime / double(kMonth.count());
  return std::clamp(frac, 0.0, 1.0);
}

void validate_design(const DesignPoint& dp, const CostModel& cm) {
  if (dp.regions.size() != cm.regions.size())
    throw ConfigError("design " + dp.name + ": expected assignments for " +
                      std::to_string(cm.regions.size()) + " regions, got " +
                      std::to_string(dp.regions.size()));
  for (const ModelRegion& r : cm.regions) {
    auto it = dp.regions.find(r.name);
    if (it == dp.regions.end())
      throw ConfigError("design " + dp.name + ": no assignment for region " +
                        r.name);
    const RegionAssignment& a = it->second;
    if (a.response == SoftwareResponse::ReloadCleanCopy && !r.disk_backed)
      throw ConfigError("design " + dp.name + ": reload-clean-copy on " +
                        r.name + " which is not disk-backed");
    if (a.response == SoftwareResponse::None &&
        a.technique != ProtectionTechnique::None)
      throw ConfigError("design " + dp.name + ": response none on " + r.name +
                        " requires technique none");
    if (a.grade.kind == MemoryGrade::Kind::Tested &&
        (a.grade.error_rate_multiplier != 1.0 ||
         a.grade.cost_per_gb_factor != 1.0))
      throw ConfigError("design " + dp.name +
                        ": tested grade must have multiplier 1 and factor 1");
  }
  if (dp.granularity == Granularity::WholeSystem) {
    auto same = [](const RegionAssignment& x, const RegionAssignment& y) {
      return x.technique == y.technique && x.response == y.response &&
             x.grade.kind == y.grade.kind;
    };
    for (const auto& [name, a] : dp.regions)
      if (!same(a, dp.regions.begin()->second))
        throw ConfigError("design " + dp.name +
                          ": whole-system granularity with differing "
                          "per-region assignments");
  }
}

namespace {

struct Pooled {
  std::uint64_t crash = 0;
  std::uint64_t valid = 0;
  std::uint64_t mismatched = 0;
  std::uint64_t queries = 0;
};

bool is_hard(ErrorMode m) { return m != ErrorMode::Soft; }

Pooled pool_cells(const VulnerabilityProfile& prof, RegionKind kind,
                  bool hard) {
  Pooled p;
  for (const auto& [k, c] : prof.cells) {
    if (k.region != kind || is_hard(k.mode) != hard) continue;
    p.crash += c.crash;
    p.valid += c.valid();
    p.mismatched += c.mismatched_queries;
    p.queries += c.queries_observed;
  }
  return p;
}

double p_crash_or_throw(const VulnerabilityProfile& prof,
                        const ModelRegion& r, bool hard) {
  Pooled p = pool_cells(prof, r.kind, hard);
  if (p.valid == 0)
    throw EvalError(std::string("no profile data for region ") + r.name +
                    " (" + region_kind_name(r.kind) + ", " +
                    (hard ? "hard" : "soft") + ")");
  return double(p.crash) / double(p.valid);
}

// Expected mismatched answers per billion queries while one unmasked error
// is resident in the region, pooled over both error classes. Regions whose
// observed trials never completed a comparison contribute zero signal.
double incorrect_rate_per_error(const VulnerabilityProfile& prof,
                                const ModelRegion& r) {
  Pooled soft = pool_cells(prof, r.kind, false);
  Pooled hard = pool_cells(prof, r.kind, true);
  const std::uint64_t mis = soft.mismatched + hard.mismatched;
  const std::uint64_t q = soft.queries + hard.queries;
  return q == 0 ? 0.0 : double(mis) / double(q) * 1e9;
}

double unit_cost(const CostModel& cm, const RegionAssignment& a) {
  double capacity = 1.0, premium = 1.0;
  switch (a.technique) {
    case ProtectionTechnique::None: break;
    case ProtectionTechnique::ParityPerWord:
      capacity += cm.parity_capacity_overhead;
      break;
    case ProtectionTechnique::Secded7264:
      capacity += cm.ecc_capacity_overhead;
      premium = cm.ecc_market_premium;
      break;
  }
  return capacity * premium * a.grade.cost_per_gb_factor;
}

// Hardware-layer split of `events` into (detected, undetected). Single-bit
// events are corrected outright by SEC-DED and detected by parity;
// multi-bit events defeat correction and even-weight ones slip past parity
// (modeled as all of them, the 2-bit-dominant case).
struct HwSplit {
  double detected = 0.0;
  double undetected = 0.0;
};
HwSplit hw_split(ProtectionTechnique t, double events, double mbf) {
  const double single = events * (1.0 - mbf);
  const double multi = events * mbf;
  switch (t) {
    case ProtectionTechnique::None: return {0.0, events};
    case ProtectionTechnique::ParityPerWord: return {single, multi};
    case ProtectionTechnique::Secded7264: return {multi, 0.0};
  }
  return {0.0, events};
}

}  // namespace

ReliabilityCostReport evaluate_design(const DesignPoint& dp,
                                      const VulnerabilityProfile& prof,
                                      const ErrorModel& em,
                                      const CostModel& cm) {
  validate_design(dp, cm);
  ReliabilityCostReport rep;
  rep.design = dp.name;

  for (const ModelRegion& r : cm.regions) {
    const RegionAssignment& a = dp.regions.at(r.name);
    RegionReport rr;
    rr.region = r.name;
    rr.technique = a.technique;
    rr.response = a.response;
    rr.grade = a.grade.kind;

    Arrivals ar = expected_error_arrivals(em, a.grade, r.size_gb, kMonthHours);
    rr.soft_events = ar.soft_events;
    rr.hard_events = ar.hard_events;

    for (bool hard : {false, true}) {
      const double events = hard ? ar.hard_events : ar.soft_events;
      HwSplit split = hw_split(a.technique, events, em.multi_bit_fraction);
      switch (a.response) {
        case SoftwareResponse::CrashOnDetect: rr.crashes += split.detected; break;
        case SoftwareResponse::ReloadCleanCopy: rr.reloads += split.detected; break;
        case SoftwareResponse::DropQuery: rr.dropped += split.detected; break;
        case SoftwareResponse::None: break;  // technique none: nothing detected
      }
      const double p = p_crash_or_throw(prof, r, hard);
      rr.crashes += split.undetected * p;
      rr.incorrect_index += split.undetected * (1.0 - p) *
                            incorrect_rate_per_error(prof, r);
    }
    rr.memory_cost_units = r.size_gb * unit_cost(cm, a);

    rep.crashes_per_month += rr.crashes;
    rep.reload_events_per_month += rr.reloads;
    rep.dropped_per_month += rr.dropped;
    rep.incorrect_per_billion += rr.incorrect_index;
    rep.memory_cost_units += rr.memory_cost_units;
    rep.regions.push_back(std::move(rr));
  }

  // Baseline: tested SEC-DED across every region.
  rep.baseline_cost_units =
      cm.total_gb() * (1.0 + cm.ecc_capacity_overhead) * cm.ecc_market_premium;
  const double saved_frac =
      (rep.baseline_cost_units - rep.memory_cost_units) /
      rep.baseline_cost_units;
  rep.memory_cost_savings_pct = saved_frac * 100.0;
  rep.server_cost_savings_pct =
      saved_frac * cm.memory_fraction_of_server_cost * 100.0;

  const double downtime_ms =
      rep.crashes_per_month * double(cm.mttr.count()) +
      rep.reload_events_per_month * double(cm.recovery_latency.count());
  rep.availability =
      std::clamp(1.0 - downtime_ms / double(kMonth.count()), 0.0, 1.0);
  return rep;
}

MaxTolerable max_tolerable_errors(double target_availability,
                                  std::chrono::milliseconds mttr,
                                  double p_crash_given_error) {
  if (!(target_availability > 0.0) || target_availability > 1.0)
    throw ConfigError("max tolerable errors: target must be in (0, 1]");
  const double allowed_crashes = (1.0 - target_availability) *
                                 double(kMonth.count()) /
                                 double(mttr.count());
  if (p_crash_given_error <= 0.0) return {true, 0.0};
  return {false, allowed_crashes / p_crash_given_error};
}

MaxTolerable max_tolerable_errors(const DesignPoint& dp,
                                  const VulnerabilityProfile& prof,
                                  double target_availability,
                                  const CostModel& cm, const ErrorModel& em) {
  ReliabilityCostReport rep = evaluate_design(dp, prof, em, cm);
  double total_events = 0.0;
  for (const RegionReport& r : rep.regions)
    total_events += r.soft_events + r.hard_events;
  const double p = total_events > 0.0 ? rep.crashes_per_month / total_events
                                      : 0.0;
  return max_tolerable_errors(target_availability, cm.mttr, p);
}

MonteCarloResult simulate_crashes(const DesignPoint& dp,
                                  const VulnerabilityProfile& prof,
                                  const ErrorModel& em, const CostModel& cm,
                                  std::uint64_t months, std::uint64_t seed) {
  validate_design(dp, cm);
  if (months == 0) throw ConfigError("simulate: months must be > 0");

  struct RegionDice {
    double soft_lambda, hard_lambda, p_soft, p_hard;
    ProtectionTechnique technique;
    SoftwareResponse response;
  };
  std::vector<RegionDice> dice;
  for (const ModelRegion& r : cm.regions) {
    const RegionAssignment& a = dp.regions.at(r.name);
    Arrivals ar = expected_error_arrivals(em, a.grade, r.size_gb, kMonthHours);
    dice.push_back({ar.soft_events, ar.hard_events,
                    p_crash_or_throw(prof, r, false),
                    p_crash_or_throw(prof, r, true), a.technique, a.response});
  }

  Rng rng(seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t m = 0; m < months; ++m) {
    std::uint64_t crashes = 0;
    for (const RegionDice& d : dice) {
      for (bool hard : {false, true}) {
        const std::uint64_t n =
            rng.poisson(hard ? d.hard_lambda : d.soft_lambda);
        const double p = hard ? d.p_hard : d.p_soft;
        for (std::uint64_t e = 0; e < n; ++e) {
          const bool multi = rng.unit() < em.multi_bit_fraction;
          bool detected = false, undetected = false;
          switch (d.technique) {
            case ProtectionTechnique::None: undetected = true; break;
            case ProtectionTechnique::ParityPerWord:
              (multi ? undetected : detected) = true;
              break;
            case ProtectionTechnique::Secded7264:
              if (multi) detected = true;  // singles corrected silently
              break;
          }
          if (detected && d.response == SoftwareResponse::CrashOnDetect)
            ++crashes;
          else if (undetected && rng.unit() < p)
            ++crashes;
        }
      }
    }
    sum += double(crashes);
    sumsq += double(crashes) * double(crashes);
  }

  MonteCarloResult r;
  r.months = months;
  r.mean_crashes_per_month = sum / double(months);
  const double var =
      (sumsq - sum * sum / double(months)) / double(months - 1);
  r.stderr_of_mean = std::sqrt(std::max(0.0, var) / double(months));
  return r;
}

ErrorModel error_model_from_toml(const TomlTable& t) {
  ErrorModel em;
  em.soft_rate_fit_per_mbit = t.get_double("error_model.soft_rate_fit_per_mbit");
  em.hard_incidence_per_gb_month =
      t.get_double("error_model.hard_incidence_per_gb_month");
  em.multi_bit_fraction = t.get_double("error_model.multi_bit_fraction");
  if (em.soft_rate_fit_per_mbit < 0 || em.hard_incidence_per_gb_month < 0)
    throw ConfigError("error model: rates must be >= 0");
  if (em.multi_bit_fraction < 0 || em.multi_bit_fraction > 1)
    throw ConfigError("error model: multi_bit_fraction must be in [0, 1]");
  return em;
}

ErrorModel error_model_from_file(const std::string& path) {
  return error_model_from_toml(TomlTable::parse_file(path));
}

CostModel cost_model_from_toml(const TomlTable& t) {
  CostModel cm;
  cm.memory_fraction_of_server_cost =
      t.get_double("cost.memory_fraction_of_server_cost");
  cm.ecc_capacity_overhead =
      t.get_double_or("cost.ecc_capacity_overhead", 8.0 / 64.0);
  cm.parity_capacity_overhead =
      t.get_double_or("cost.parity_capacity_overhead", 1.0 / 64.0);
  cm.ecc_market_premium = t.get_double_or("cost.ecc_market_premium", 1.2);
  cm.mttr = std::chrono::milliseconds(t.get_int_or("cost.mttr_ms", 600000));
  cm.recovery_latency = std::chrono::milliseconds(
      t.get_int_or("cost.recovery_latency_ms", 100));
  if (cm.memory_fraction_of_server_cost < 0 ||
      cm.memory_fraction_of_server_cost > 1)
    throw ConfigError("cost model: memory_fraction_of_server_cost in [0,1]");
  if (cm.mttr.count() <= 0) throw ConfigError("cost model: mttr must be > 0");

  cm.tested_grade = MemoryGrade::tested();
  if (t.has("grade.less_tested.error_rate_multiplier"))
    cm.less_tested_grade = MemoryGrade::less_tested(
        t.get_double("grade.less_tested.error_rate_multiplier"),
        t.get_double("grade.less_tested.cost_per_gb_factor"));

  for (const std::string& name : t.subsections("region")) {
    ModelRegion r;
    r.name = name;
    const std::string key = "region." + name + ".";
    auto kind = region_kind_from_name(t.get_string(key + "kind"));
    if (!kind)
      throw ConfigError("cost model: unknown region kind for " + name);
    r.kind = *kind;
    r.size_gb = t.get_double(key + "size_gb");
    if (r.size_gb <= 0)
      throw ConfigError("cost model: region " + name + " size must be > 0");
    r.disk_backed = t.get_bool_or(key + "disk_backed", false);
    cm.regions.push_back(std::move(r));
  }
  if (cm.regions.empty())
    throw ConfigError("cost model: at least one [region.<name>] required");
  return cm;
}

CostModel cost_model_from_file(const std::string& path) {
  return cost_model_from_toml(TomlTable::parse_file(path));
}

VulnerabilityProfile profile_from_toml(const TomlTable& t) {
  VulnerabilityProfile prof;
  const std::string workload = t.get_string_or("workload", "calibrated-mix");
  for (const std::string& region : t.subsections("cell")) {
    auto kind = region_kind_from_name(region);
    if (!kind)
      throw ConfigError("profile: unknown region kind " + region);
    for (const std::string& cls : t.subsections("cell." + region)) {
      ErrorMode mode;
      if (cls == "soft")
        mode = ErrorMode::Soft;
      else if (cls == "hard")
        mode = ErrorMode::HardStuckCurrent;
      else
        throw ConfigError("profile: cell class must be soft or hard, got " +
                          cls);
      const std::string key = "cell." + region + "." + cls + ".";
      CellStats c;
      c.crash = std::uint64_t(t.get_int(key + "crashes"));
      const std::uint64_t trials = std::uint64_t(t.get_int(key + "trials"));
      if (c.crash > trials)
        throw ConfigError("profile: crashes exceed trials in " + region);
      c.masked = trials - c.crash;
      c.mismatched_queries = std::uint64_t(t.get_int_or(key + "mismatched", 0));
      c.queries_observed = std::uint64_t(t.get_int_or(key + "queries", 0));
      prof.cells[CellKey{workload, *kind, mode}] = c;
    }
  }
  if (prof.cells.empty())
    throw ConfigError("profile: no [cell.<region>.<class>] sections");
  return prof;
}

VulnerabilityProfile profile_from_file(const std::string& path) {
  return profile_from_toml(TomlTable::parse_file(path));
}

namespace {

RegionAssignment assignment_from_toml(const TomlTable& t,
                                      const std::string& key,
                                      const CostModel& cm) {
  RegionAssignment a;
  auto tech = protection_technique_from_name(t.get_string(key + "technique"));
  if (!tech) throw ConfigError("design: unknown technique at " + key);
  a.technique = *tech;
  auto resp = software_response_from_name(t.get_string(key + "response"));
  if (!resp) throw ConfigError("design: unknown response at " + key);
  a.response = *resp;
  const std::string grade = t.get_string_or(key + "grade", "tested");
  if (grade == "tested")
    a.grade = cm.tested_grade;
  else if (grade == "less-tested")
    a.grade = cm.less_tested_grade;
  else
    throw ConfigError("design: unknown grade " + grade + " at " + key);
  return a;
}

}  // namespace

DesignPoint design_point_from_toml(const TomlTable& t, const CostModel& cm) {
  DesignPoint dp;
  dp.name = t.get_string("design.name");
  const std::string gran = t.get_string_or("design.granularity", "whole-system");
  if (gran == "whole-system")
    dp.granularity = Granularity::WholeSystem;
  else if (gran == "per-region")
    dp.granularity = Granularity::PerRegion;
  else
    throw ConfigError("design: granularity must be whole-system or per-region");

  if (dp.granularity == Granularity::WholeSystem) {
    RegionAssignment a = assignment_from_toml(t, "assignment.", cm);
    for (const ModelRegion& r : cm.regions) dp.regions[r.name] = a;
  } else {
    for (const ModelRegion& r : cm.regions)
      dp.regions[r.name] =
          assignment_from_toml(t, "region." + r.name + ".", cm);
  }
  validate_design(dp, cm);
  return dp;
}

DesignPoint design_point_from_file(const std::string& path,
                                   const CostModel& cm) {
  return design_point_from_toml(TomlTable::parse_file(path), cm);
}

std::vector<DesignPoint> builtin_design_points(const CostModel& cm) {
  auto whole = [&](const std::string& name, RegionAssignment a) {
    DesignPoint dp;
    dp.name = name;
    dp.granularity = Granularity::WholeSystem;
    for (const ModelRegion& r : cm.regions) dp.regions[r.name] = a;
    return dp;
  };
  // Parity + reload on disk-backed regions, bare memory elsewhere.
  auto recover = [&](const std::string& name, const MemoryGrade& grade) {
    DesignPoint dp;
    dp.name = name;
    dp.granularity = Granularity::PerRegion;
    for (const ModelRegion& r : cm.regions) {
      RegionAssignment a;
      a.grade = grade;
      if (r.disk_backed) {
        a.technique = ProtectionTechnique::ParityPerWord;
        a.response = SoftwareResponse::ReloadCleanCopy;
      }
      dp.regions[r.name] = a;
    }
    return dp;
  };

  std::vector<DesignPoint> v;
  v.push_back(whole("typical-server",
                    {ProtectionTechnique::Secded7264,
                     SoftwareResponse::CrashOnDetect, cm.tested_grade}));
  v.push_back(whole("consumer-pc", {ProtectionTechnique::None,
                                    SoftwareResponse::None, cm.tested_grade}));
  v.push_back(whole("less-tested",
                    {ProtectionTechnique::None, SoftwareResponse::None,
                     cm.less_tested_grade}));
  v.push_back(recover("detect-recover", cm.tested_grade));
  v.push_back(recover("detect-recover-l", cm.less_tested_grade));
  return v;
}

std::string report_json(const ReliabilityCostReport& r) {
  ordered_json j;
  j["design"] = r.design;
  j["crashes_per_month"] = r.crashes_per_month;
  j["reload_events_per_month"] = r.reload_events_per_month;
  j["dropped_per_month"] = r.dropped_per_month;
  j["incorrect_per_billion"] = r.incorrect_per_billion;
  j["availability"] = r.availability;
  j["memory_cost_units"] = r.memory_cost_units;
  j["baseline_cost_units"] = r.baseline_cost_units;
  j["memory_cost_savings_pct"] = r.memory_cost_savings_pct;
  j["server_cost_savings_pct"] = r.server_cost_savings_pct;
  ordered_json regions = ordered_json::array();
  for (const RegionReport& rr : r.regions) {
    ordered_json x;
    x["region"] = rr.region;
    x["technique"] = protection_technique_name(rr.technique);
    x["response"] = software_response_name(rr.response);
    x["grade"] = memory_grade_name(rr.grade);
    x["soft_events"] = rr.soft_events;
    x["hard_events"] = rr.hard_events;
    x["crashes"] = rr.crashes;
    x["reloads"] = rr.reloads;
    x["dropped"] = rr.dropped;
    x["incorrect_index"] = rr.incorrect_index;
    x["memory_cost_units"] = rr.memory_cost_units;
    regions.push_back(std::move(x));
  }
  j["regions"] = std::move(regions);
  return j.dump();
}

}  // namespace hrmlab
