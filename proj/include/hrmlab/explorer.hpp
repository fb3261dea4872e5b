#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hrmlab/hrm_model.hpp"

namespace hrmlab {

// The three design dimensions crossed with granularity and the region
// layout they apply to. Axes must be non-empty; grades must not repeat a
// kind (names would alias); per-region granularity needs at least two
// regions to differ from whole-system.
struct DesignSpace {
  std::vector<ProtectionTechnique> techniques;
  std::vector<SoftwareResponse> responses;
  std::vector<MemoryGrade> grades;
  std::vector<Granularity> granularities;
  std::vector<ModelRegion> regions;
};

struct Enumeration {
  std::vector<DesignPoint> points;
  // Raw cross-product size before validity filtering, and how many
  // combinations the DesignPoint invariants rejected.
  std::uint64_t considered = 0;
  std::uint64_t filtered = 0;
};

// Exhaustively enumerates every valid design point in the space. Points get
// deterministic content-derived names ("ws:..." / "pr:..."), so the result
// set is independent of axis ordering. Throws ConfigError on an invalid
// space and CapacityError (with the size estimate) when the valid point
// count would exceed 1e6.
Enumeration enumerate_designs(const DesignSpace& space);

// Evaluates every point against one profile/model, fanning out over
// `threads` workers (0 = hardware concurrency). Reports come back in input
// order regardless of scheduling.
std::vector<ReliabilityCostReport> evaluate_designs(
    const std::vector<DesignPoint>& points, const VulnerabilityProfile& prof,
    const ErrorModel& em, const CostModel& cm, unsigned threads = 0);

// Availability and savings are the two objective axes; the incorrect-query
// exposure index is reported alongside and only joins the dominance check
// when opted in.
struct ParetoOptions {
  bool include_incorrect_axis = false;
};

// Indices (ascending) of the maximal reports under (availability up,
// savings up) dominance; exact ties on every axis are all kept.
std::vector<std::size_t> pareto_indices(
    const std::vector<ReliabilityCostReport>& reports,
    const ParetoOptions& opts);
std::vector<std::size_t> pareto_indices(
    const std::vector<ReliabilityCostReport>& reports);

std::vector<ReliabilityCostReport> pareto_front(
    const std::vector<ReliabilityCostReport>& reports,
    const ParetoOptions& opts);
std::vector<ReliabilityCostReport> pareto_front(
    const std::vector<ReliabilityCostReport>& reports);

// Drops reports below the availability floor and orders the rest by savings
// descending (stable). min_availability must lie in [0, 1].
std::vector<ReliabilityCostReport> constrain(
    const std::vector<ReliabilityCostReport>& reports,
    double min_availability);

// Fig-style comparison table: one row per report with the two objective
// axes, the crash rate behind availability, and the exposure index.
std::string explorer_csv(const std::vector<ReliabilityCostReport>& reports);

// Same table as JSON with a per-design pareto flag and the front listed
// separately (input order).
std::string explorer_json(const std::vector<ReliabilityCostReport>& reports);
std::string explorer_json(const std::vector<ReliabilityCostReport>& reports,
                          const ParetoOptions& opts);

}  // namespace hrmlab
