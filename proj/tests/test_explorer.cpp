#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hrmlab/errors.hpp"
#include "hrmlab/explorer.hpp"
#include "hrmlab/rng.hpp"

#include "json.hpp"

using namespace hrmlab;

namespace {

std::string calib(const char* file) {
  return std::string(HRMLAB_DATA_DIR) + "/calib/" + file;
}

struct Shipped {
  ErrorModel em;
  CostModel cm;
  VulnerabilityProfile prof;
};

Shipped shipped() {
  return {error_model_from_file(calib("error_model.toml")),
          cost_model_from_file(calib("cost_model.toml")),
          profile_from_file(calib("vulnerability.toml"))};
}

ReliabilityCostReport rep(std::string name, double avail, double sav,
                          double inc = 0.0) {
  ReliabilityCostReport r;
  r.design = std::move(name);
  r.availability = avail;
  r.server_cost_savings_pct = sav;
  r.incorrect_per_billion = inc;
  return r;
}

// Independent O(n^2) dominance check, written against the definition:
// maximal under (availability up, savings up), ties kept.
std::vector<std::size_t> brute_front(
    const std::vector<ReliabilityCostReport>& v, bool inc_axis) {
  auto dom = [&](const ReliabilityCostReport& a,
                 const ReliabilityCostReport& b) {
    bool ge = a.availability >= b.availability &&
              a.server_cost_savings_pct >= b.server_cost_savings_pct;
    bool gt = a.availability > b.availability ||
              a.server_cost_savings_pct > b.server_cost_savings_pct;
    if (inc_axis) {
      ge = ge && a.incorrect_per_billion <= b.incorrect_per_billion;
      gt = gt || a.incorrect_per_billion < b.incorrect_per_billion;
    }
    return ge && gt;
  };
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < v.size() && !dominated; ++j)
      dominated = j != i && dom(v[j], v[i]);
    if (!dominated) out.push_back(i);
  }
  return out;
}

std::vector<std::string> names_sorted(
    const std::vector<ReliabilityCostReport>& v) {
  std::vector<std::string> n;
  for (const auto& r : v) n.push_back(r.design);
  std::sort(n.begin(), n.end());
  return n;
}

DesignSpace small_space() {
  DesignSpace s;
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::CrashOnDetect};
  s.grades = {MemoryGrade::tested()};
  s.granularities = {Granularity::PerRegion};
  s.regions = {{"heap", RegionKind::Heap, 8.0, false},
               {"stack", RegionKind::Stack, 1.0, false},
               {"other", RegionKind::Other, 4.0, false}};
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("explorer");

TEST_CASE("whole-system enumeration counts and filters") {
  DesignSpace s;
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord};
  s.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect};
  s.grades = {MemoryGrade::tested()};
  s.granularities = {Granularity::WholeSystem};
  s.regions = {{"heap", RegionKind::Heap, 8.0, false}};

  Enumeration e = enumerate_designs(s);
  CHECK(e.considered == 4);
  // parity + response-none violates the assignment invariant.
  CHECK(e.filtered == 1);
  REQUIRE(e.points.size() == 3);
  std::set<std::string> names;
  for (const auto& dp : e.points) names.insert(dp.name);
  CHECK(names.count("ws:none+none+tested") == 1);
  CHECK(names.count("ws:none+crash-on-detect+tested") == 1);
  CHECK(names.count("ws:parity-per-word+crash-on-detect+tested") == 1);

  s.techniques = {ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::CrashOnDetect};
  e = enumerate_designs(s);
  CHECK(e.points.size() == 1);
  CHECK(e.filtered == 0);
}

TEST_CASE("per-region enumeration is the cross product of valid combos") {
  Enumeration e = enumerate_designs(small_space());
  CHECK(e.considered == 8);
  CHECK(e.filtered == 0);
  REQUIRE(e.points.size() == 8);

  // Brute-force listing: every (heap, stack, other) technique triple once.
  std::set<std::string> names;
  for (const auto& dp : e.points) {
    CHECK(dp.granularity == Granularity::PerRegion);
    CHECK(dp.regions.size() == 3);
    names.insert(dp.name);
  }
  CHECK(names.size() == 8);
  int heap_secded = 0;
  for (const auto& dp : e.points)
    if (dp.regions.at("heap").technique == ProtectionTechnique::Secded7264)
      ++heap_secded;
  CHECK(heap_secded == 4);

  // Every enumerated point passes design validation.
  CostModel cm;
  cm.regions = small_space().regions;
  for (const auto& dp : e.points) CHECK_NOTHROW(validate_design(dp, cm));

  // Reload is only offered on disk-backed regions.
  DesignSpace s = small_space();
  s.responses = {SoftwareResponse::CrashOnDetect,
                 SoftwareResponse::ReloadCleanCopy};
  s.regions[1].disk_backed = true;
  e = enumerate_designs(s);
  // heap/other: 2 combos each; stack(disk): 4 combos.
  CHECK(e.points.size() == 16);
  CHECK(e.considered == 64);
  CHECK(e.filtered == 48);
  for (const auto& dp : e.points) {
    CHECK(dp.regions.at("heap").response != SoftwareResponse::ReloadCleanCopy);
    CHECK(dp.regions.at("other").response != SoftwareResponse::ReloadCleanCopy);
  }
}

TEST_CASE("axis ordering does not change the enumerated set") {
  DesignSpace s = small_space();
  s.granularities = {Granularity::WholeSystem, Granularity::PerRegion};
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord,
                  ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect};
  Enumeration a = enumerate_designs(s);
  std::reverse(s.techniques.begin(), s.techniques.end());
  std::reverse(s.responses.begin(), s.responses.end());
  std::reverse(s.regions.begin(), s.regions.end());
  Enumeration b = enumerate_designs(s);
  CHECK(a.points.size() == b.points.size());
  CHECK(a.filtered == b.filtered);
  std::set<std::string> an, bn;
  for (const auto& dp : a.points) an.insert(dp.name);
  for (const auto& dp : b.points) bn.insert(dp.name);
  CHECK(an == bn);
}

TEST_CASE("invalid spaces and oversized spaces are refused") {
  DesignSpace s = small_space();
  s.techniques.clear();
  CHECK_THROWS_AS(enumerate_designs(s), ConfigError);

  s = small_space();
  s.regions.resize(1);
  CHECK_THROWS_AS(enumerate_designs(s), ConfigError);

  s = small_space();
  s.grades = {MemoryGrade::tested(), MemoryGrade::tested()};
  CHECK_THROWS_AS(enumerate_designs(s), ConfigError);

  s = small_space();
  s.regions.push_back(s.regions[0]);
  CHECK_THROWS_AS(enumerate_designs(s), ConfigError);

  // 20 valid combos per disk-backed region, five regions: 3.2M points.
  s = small_space();
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord,
                  ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect,
                 SoftwareResponse::ReloadCleanCopy, SoftwareResponse::DropQuery};
  s.grades = {MemoryGrade::tested(), MemoryGrade::less_tested(3.0, 0.785)};
  s.regions = {{"r0", RegionKind::Heap, 1.0, true},
               {"r1", RegionKind::Heap, 1.0, true},
               {"r2", RegionKind::Heap, 1.0, true},
               {"r3", RegionKind::Heap, 1.0, true},
               {"r4", RegionKind::Heap, 1.0, true}};
  CHECK_THROWS_WITH_AS(enumerate_designs(s), doctest::Contains("exceeds"),
                       CapacityError);
}

TEST_CASE("pareto front basics") {
  // Single report is its own front.
  std::vector<ReliabilityCostReport> v = {rep("a", 0.999, 2.0)};
  CHECK(pareto_front(v).size() == 1);

  // Strict dominance on both axes.
  v = {rep("worse", 0.99, 1.0), rep("better", 0.999, 2.0)};
  std::vector<ReliabilityCostReport> f = pareto_front(v);
  REQUIRE(f.size() == 1);
  CHECK(f[0].design == "better");

  // Exact ties on both axes are all kept.
  v = {rep("t1", 0.999, 2.0), rep("t2", 0.999, 2.0), rep("lo", 0.99, 1.0)};
  f = pareto_front(v);
  CHECK(names_sorted(f) == std::vector<std::string>{"t1", "t2"});

  // Same availability, different savings: the better one dominates.
  v = {rep("a", 0.999, 2.0), rep("b", 0.999, 3.0)};
  f = pareto_front(v);
  REQUIRE(f.size() == 1);
  CHECK(f[0].design == "b");

  // Incomparable points all survive, in input order.
  v = {rep("hi-av", 0.9999, 0.0), rep("hi-sv", 0.99, 5.0),
       rep("mid", 0.995, 2.5)};
  f = pareto_front(v);
  REQUIRE(f.size() == 3);
  CHECK(f[0].design == "hi-av");
  CHECK(f[1].design == "hi-sv");
  CHECK(f[2].design == "mid");

  CHECK(pareto_front({}).empty());
}

TEST_CASE("pareto front matches brute force on random report sets") {
  Rng rng(0xF0F0);
  for (int set = 0; set < 60; ++set) {
    const std::size_t n = 1 + rng.bounded(set < 40 ? 60 : 400);
    std::vector<ReliabilityCostReport> v;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grids force plenty of exact ties.
      double avail = 0.990 + 0.001 * double(rng.bounded(10));
      double sav = double(rng.bounded(6));
      double inc = 100.0 * double(rng.bounded(3));
      v.push_back(rep("r" + std::to_string(i), avail, sav, inc));
    }
    CHECK(pareto_indices(v) == brute_front(v, false));
    ParetoOptions tri;
    tri.include_incorrect_axis = true;
    CHECK(pareto_indices(v, tri) == brute_front(v, true));
  }
}

TEST_CASE("exposure index joins the dominance check only when asked") {
  std::vector<ReliabilityCostReport> v = {rep("a", 0.9, 5.0, 100.0),
                                          rep("b", 0.9, 5.0, 50.0),
                                          rep("c", 0.95, 4.0, 200.0)};
  CHECK(names_sorted(pareto_front(v)) ==
        std::vector<std::string>{"a", "b", "c"});
  ParetoOptions tri;
  tri.include_incorrect_axis = true;
  CHECK(names_sorted(pareto_front(v, tri)) ==
        std::vector<std::string>{"b", "c"});
}

TEST_CASE("constrain filters and orders by savings") {
  std::vector<ReliabilityCostReport> v = {
      rep("a", 0.9990, 1.0), rep("b", 0.9980, 4.0), rep("c", 0.9995, 2.0),
      rep("d", 0.9991, 2.0)};
  std::vector<ReliabilityCostReport> f = constrain(v, 0.999);
  REQUIRE(f.size() == 3);
  CHECK(f[0].design == "c");
  CHECK(f[1].design == "d");
  CHECK(f[2].design == "a");
  // Stable on savings ties: c precedes d only via input order.
  CHECK(f[0].server_cost_savings_pct == 2.0);

  CHECK(constrain(v, 0.0).size() == 4);
  CHECK(constrain(v, 1.0).empty());
  CHECK_THROWS_AS(constrain(v, -0.1), ConfigError);
  CHECK_THROWS_AS(constrain(v, 1.5), ConfigError);
}

TEST_CASE("constrain and pareto commute") {
  Rng rng(0xBEEF);
  for (int set = 0; set < 30; ++set) {
    const std::size_t n = 1 + rng.bounded(80);
    std::vector<ReliabilityCostReport> v;
    for (std::size_t i = 0; i < n; ++i)
      v.push_back(rep("r" + std::to_string(i),
                      0.990 + 0.001 * double(rng.bounded(10)),
                      double(rng.bounded(6))));
    for (double a : {0.0, 0.992, 0.995, 0.999, 1.0}) {
      CHECK(names_sorted(constrain(pareto_front(v), a)) ==
            names_sorted(pareto_front(constrain(v, a))));
    }
  }
}

TEST_CASE("shipped design points: front and availability target") {
  Shipped s = shipped();
  std::vector<DesignPoint> points = builtin_design_points(s.cm);
  std::vector<ReliabilityCostReport> reports =
      evaluate_designs(points, s.prof, s.em, s.cm, 2);
  REQUIRE(reports.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(reports[i].design == points[i].name);

  std::vector<ReliabilityCostReport> front = pareto_front(reports);
  std::vector<std::string> fn = names_sorted(front);
  // consumer-pc is dominated by detect-recover-l on both axes.
  CHECK(fn == std::vector<std::string>{"detect-recover", "detect-recover-l",
                                       "less-tested", "typical-server"});

  std::vector<ReliabilityCostReport> ok = constrain(reports, 0.999);
  REQUIRE(ok.size() == 3);
  CHECK(ok[0].design == "detect-recover-l");
  CHECK(ok[1].design == "detect-recover");
  CHECK(ok[2].design == "typical-server");

  CHECK(names_sorted(constrain(pareto_front(reports), 0.999)) ==
        names_sorted(pareto_front(constrain(reports, 0.999))));
}

TEST_CASE("evaluation fan-out is deterministic across thread counts") {
  Shipped s = shipped();
  DesignSpace space = small_space();
  space.regions = {{"heap", RegionKind::Heap, 16.0, false},
                   {"private", RegionKind::Private, 10.0, true},
                   {"stack", RegionKind::Stack, 0.5, false},
                   {"other", RegionKind::Other, 5.5, false}};
  space.techniques = {ProtectionTechnique::None,
                      ProtectionTechnique::ParityPerWord,
                      ProtectionTechnique::Secded7264};
  space.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect,
                     SoftwareResponse::ReloadCleanCopy};
  space.grades = {MemoryGrade::tested(), s.cm.less_tested_grade};
  space.granularities = {Granularity::WholeSystem, Granularity::PerRegion};

  Enumeration e = enumerate_designs(space);
  CHECK(e.points.size() > 1000);
  std::vector<ReliabilityCostReport> r1 =
      evaluate_designs(e.points, s.prof, s.em, s.cm, 1);
  std::vector<ReliabilityCostReport> r4 =
      evaluate_designs(e.points, s.prof, s.em, s.cm, 4);
  CHECK(explorer_csv(r1) == explorer_csv(r4));

  // Evaluation order does not matter either.
  std::vector<DesignPoint> rev(e.points.rbegin(), e.points.rend());
  std::vector<ReliabilityCostReport> rr =
      evaluate_designs(rev, s.prof, s.em, s.cm, 4);
  std::map<std::string, double> by_name;
  for (const auto& r : rr) by_name[r.design] = r.availability;
  for (const auto& r : r1) CHECK(by_name.at(r.design) == r.availability);

  // Evaluation failures surface from the pool.
  VulnerabilityProfile empty;
  CHECK_THROWS_AS(evaluate_designs(e.points, empty, s.em, s.cm, 4), EvalError);
}

TEST_CASE("csv and json report tables") {
  Shipped s = shipped();
  std::vector<ReliabilityCostReport> reports = evaluate_designs(
      builtin_design_points(s.cm), s.prof, s.em, s.cm, 1);

  std::string csv = explorer_csv(reports);
  CHECK(csv.rfind("design,availability,savings_pct,crashes_per_month,"
                  "incorrect_per_billion\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.find("typical-server,") != std::string::npos);

  nlohmann::json j = nlohmann::json::parse(explorer_json(reports));
  CHECK(j["schema"] == "hrmlab-explorer-v1");
  REQUIRE(j["designs"].size() == 5);
  std::map<std::string, bool> flags;
  for (const auto& d : j["designs"])
    flags[d["design"].get<std::string>()] = d["pareto"].get<bool>();
  CHECK(flags.at("consumer-pc") == false);
  CHECK(flags.at("detect-recover") == true);
  CHECK(flags.at("detect-recover-l") == true);
  CHECK(j["pareto_front"].size() == 4);
}

TEST_SUITE_END();
