#include "hrmlab/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hrmlab/errors.hpp"
#include "json.hpp"

namespace hrmlab {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kMaxPoints = 1000000;

struct Combo {
  ProtectionTechnique technique;
  SoftwareResponse response;
  const MemoryGrade* grade;
};

bool combo_valid(const Combo& c, bool disk_backed) {
  if (c.response == SoftwareResponse::ReloadCleanCopy && !disk_backed)
    return false;
  if (c.response == SoftwareResponse::None &&
      c.technique != ProtectionTechnique::None)
    return false;
  return true;
}

std::string combo_label(const Combo& c) {
  std::string s = protection_technique_name(c.technique);
  s += '+';
  s += software_response_name(c.response);
  s += '+';
  s += memory_grade_name(c.grade->kind);
  return s;
}

void validate_space(const DesignSpace& space) {
  if (space.techniques.empty() || space.responses.empty() ||
      space.grades.empty() || space.granularities.empty() ||
      space.regions.empty())
    throw ConfigError("design space: every axis must be non-empty");
  std::set<MemoryGrade::Kind> kinds;
  for (const MemoryGrade& g : space.grades)
    if (!kinds.insert(g.kind).second)
      throw ConfigError("design space: duplicate grade kind " +
                        std::string(memory_grade_name(g.kind)));
  std::set<std::string> names;
  for (const ModelRegion& r : space.regions)
    if (!names.insert(r.name).second)
      throw ConfigError("design space: duplicate region " + r.name);
  for (Granularity g : space.granularities)
    if (g == Granularity::PerRegion && space.regions.size() < 2)
      throw ConfigError(
          "design space: per-region granularity needs at least 2 regions");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// A dominates B when it is at least as good on every active axis and
// strictly better on one. Higher availability and savings win; lower
// exposure wins when that axis is active.
bool dominates(const ReliabilityCostReport& a, const ReliabilityCostReport& b,
               bool incorrect_axis) {
  if (a.availability < b.availability) return false;
  if (a.server_cost_savings_pct < b.server_cost_savings_pct) return false;
  if (incorrect_axis && a.incorrect_per_billion > b.incorrect_per_billion)
    return false;
  return a.availability > b.availability ||
         a.server_cost_savings_pct > b.server_cost_savings_pct ||
         (incorrect_axis && a.incorrect_per_billion < b.incorrect_per_billion);
}

}  // namespace

Enumeration enumerate_designs(const DesignSpace& space) {
  validate_space(space);

  std::vector<Combo> combos;
  for (ProtectionTechnique t : space.techniques)
    for (SoftwareResponse r : space.responses)
      for (const MemoryGrade& g : space.grades)
        combos.push_back({t, r, &g});

  // Per-region valid combo lists drive both granularities.
  std::vector<std::vector<std::size_t>> valid(space.regions.size());
  for (std::size_t i = 0; i < space.regions.size(); ++i)
    for (std::size_t c = 0; c < combos.size(); ++c)
      if (combo_valid(combos[c], space.regions[i].disk_backed))
        valid[i].push_back(c);

  const bool whole = std::find(space.granularities.begin(),
                               space.granularities.end(),
                               Granularity::WholeSystem) !=
                     space.granularities.end();
  const bool per = std::find(space.granularities.begin(),
                             space.granularities.end(),
                             Granularity::PerRegion) !=
                   space.granularities.end();

  // Count before materializing so an oversized space fails fast.
  std::uint64_t whole_points = 0;
  if (whole)
    for (std::size_t c = 0; c < combos.size(); ++c) {
      bool ok = true;
      for (const ModelRegion& r : space.regions)
        ok = ok && combo_valid(combos[c], r.disk_backed);
      whole_points += ok ? 1 : 0;
    }
  long double per_points_ld = per ? 1.0L : 0.0L;
  if (per)
    for (const auto& v : valid) per_points_ld *= (long double)v.size();
  const long double total_ld = (long double)whole_points + per_points_ld;
  if (total_ld > (long double)kMaxPoints) {
    std::ostringstream os;
    os << "design space too large: about " << (double)total_ld
       << " points exceeds the " << kMaxPoints << " bound";
    throw CapacityError(os.str());
  }

  Enumeration out;
  if (whole) {
    out.considered += combos.size();
    for (const Combo& c : combos) {
      bool ok = true;
      for (const ModelRegion& r : space.regions)
        ok = ok && combo_valid(c, r.disk_backed);
      if (!ok) {
        ++out.filtered;
        continue;
      }
      DesignPoint dp;
      dp.name = "ws:" + combo_label(c);
      dp.granularity = Granularity::WholeSystem;
      for (const ModelRegion& r : space.regions)
        dp.regions[r.name] = {c.technique, c.response, *c.grade};
      out.points.push_back(std::move(dp));
    }
  }
  if (per) {
    long double considered_ld = 1.0L;
    for (std::size_t i = 0; i < space.regions.size(); ++i)
      considered_ld *= (long double)combos.size();
    const std::uint64_t per_valid = (std::uint64_t)per_points_ld;
    out.considered += considered_ld > 1e18L ? UINT64_MAX
                                            : (std::uint64_t)considered_ld;
    out.filtered += (considered_ld > 1e18L ? UINT64_MAX
                                           : (std::uint64_t)considered_ld) -
                    per_valid;
    if (per_valid > 0) {
      std::vector<std::size_t> odo(space.regions.size(), 0);
      for (;;) {
        DesignPoint dp;
        dp.granularity = Granularity::PerRegion;
        for (std::size_t i = 0; i < space.regions.size(); ++i) {
          const Combo& c = combos[valid[i][odo[i]]];
          dp.regions[space.regions[i].name] = {c.technique, c.response,
                                               *c.grade};
        }
        // Name from the sorted assignment map so region ordering in the
        // space does not affect identity.
        std::string name = "pr:";
        for (const auto& [rname, a] : dp.regions) {
          if (name.size() > 3) name += ',';
          name += rname;
          name += '=';
          name += combo_label({a.technique, a.response, &a.grade});
        }
        dp.name = std::move(name);
        out.points.push_back(std::move(dp));
        std::size_t i = space.regions.size();
        while (i > 0) {
          --i;
          if (++odo[i] < valid[i].size()) break;
          odo[i] = 0;
          if (i == 0) goto done;
        }
      }
    done:;
    }
  }
  return out;
}

std::vector<ReliabilityCostReport> evaluate_designs(
    const std::vector<DesignPoint>& points, const VulnerabilityProfile& prof,
    const ErrorModel& em, const CostModel& cm, unsigned threads) {
  std::vector<ReliabilityCostReport> out(points.size());
  if (points.empty()) return out;
  unsigned n = threads ? threads : std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  n = std::min<unsigned>(n, (unsigned)points.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      try {
        out[i] = evaluate_design(points[i], prof, em, cm);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<std::size_t> pareto_indices(
    const std::vector<ReliabilityCostReport>& reports,
    const ParetoOptions& opts) {
  std::vector<std::size_t> front;
  if (reports.empty()) return front;
  if (opts.include_incorrect_axis) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < reports.size() && !dominated; ++j)
        dominated = j != i && dominates(reports[j], reports[i], true);
      if (!dominated) front.push_back(i);
    }
    return front;
  }

  // Two axes: sweep availability groups from high to low; a point survives
  // iff its savings strictly beat everything strictly above it and nothing
  // in its own group does better.
  std::vector<std::size_t> order(reports.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (reports[a].availability != reports[b].availability)
      return reports[a].availability > reports[b].availability;
    return reports[a].server_cost_savings_pct >
           reports[b].server_cost_savings_pct;
  });
  double best_above = -1e300;
  std::size_t g = 0;
  while (g < order.size()) {
    std::size_t end = g;
    while (end < order.size() &&
           reports[order[end]].availability == reports[order[g]].availability)
      ++end;
    const double group_best = reports[order[g]].server_cost_savings_pct;
    if (group_best > best_above)
      for (std::size_t k = g; k < end; ++k)
        if (reports[order[k]].server_cost_savings_pct == group_best)
          front.push_back(order[k]);
    best_above = std::max(best_above, group_best);
    g = end;
  }
  std::sort(front.begin(), front.end());
  return front;
}

std::vector<std::size_t> pareto_indices(
    const std::vector<ReliabilityCostReport>& reports) {
  return pareto_indices(reports, ParetoOptions{});
}

std::vector<ReliabilityCostReport> pareto_front(
    const std::vector<ReliabilityCostReport>& reports,
    const ParetoOptions& opts) {
  std::vector<ReliabilityCostReport> out;
  for (std::size_t i : pareto_indices(reports, opts))
    out.push_back(reports[i]);
  return out;
}

std::vector<ReliabilityCostReport> pareto_front(
    const std::vector<ReliabilityCostReport>& reports) {
  return pareto_front(reports, ParetoOptions{});
}

std::vector<ReliabilityCostReport> constrain(
    const std::vector<ReliabilityCostReport>& reports,
    double min_availability) {
  if (!(min_availability >= 0.0 && min_availability <= 1.0))
    throw ConfigError("constrain: min_availability must lie in [0, 1]");
  std::vector<ReliabilityCostReport> out;
  for (const ReliabilityCostReport& r : reports)
    if (r.availability >= min_availability) out.push_back(r);
  std::stable_sort(out.begin(), out.end(),
                   [](const ReliabilityCostReport& a,
                      const ReliabilityCostReport& b) {
                     return a.server_cost_savings_pct >
                            b.server_cost_savings_pct;
                   });
  return out;
}

std::string explorer_csv(const std::vector<ReliabilityCostReport>& reports) {
  std::string out =
      "design,availability,savings_pct,crashes_per_month,"
      "incorrect_per_billion\n";
  for (const ReliabilityCostReport& r : reports) {
    out += r.design;
    out += ',';
    out += fmt(r.availability);
    out += ',';
    out += fmt(r.server_cost_savings_pct);
    out += ',';
    out += fmt(r.crashes_per_month);
    out += ',';
    out += fmt(r.incorrect_per_billion);
    out += '\n';
  }
  return out;
}

std::string explorer_json(const std::vector<ReliabilityCostReport>& reports,
                          const ParetoOptions& opts) {
  std::vector<std::size_t> front = pareto_indices(reports, opts);
  std::vector<bool> on(reports.size(), false);
  for (std::size_t i : front) on[i] = true;

  ordered_json designs = ordered_json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const ReliabilityCostReport& r = reports[i];
    designs.push_back({{"design", r.design},
                       {"availability", r.availability},
                       {"savings_pct", r.server_cost_savings_pct},
                       {"crashes_per_month", r.crashes_per_month},
                       {"incorrect_per_billion", r.incorrect_per_billion},
                       {"pareto", (bool)on[i]}});
  }
  ordered_json names = ordered_json::array();
  for (std::size_t i : front) names.push_back(reports[i].design);
  ordered_json j{{"schema", "hrmlab-explorer-v1"},
                 {"designs", designs},
                 {"pareto_front", names}};
  return j.dump(2);
}

std::string explorer_json(const std::vector<ReliabilityCostReport>& reports) {
  return explorer_json(reports, ParetoOptions{});
}

}  // namespace hrmlab
