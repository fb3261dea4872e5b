#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <stdlib.h>
#include <unistd.h>

#include "hrmlab/stats.hpp"
#include "hrmlab/workloads.hpp"
#include "json.hpp"

using namespace hrmlab;

namespace {

LogTrialRecord rec(RegionKind rk, ErrorMode m, TrialOutcome::Kind k,
                   std::uint64_t mismatched = 0, std::uint64_t total = 0,
                   std::int64_t tt_ms = 0, std::uint64_t served = 0) {
  LogTrialRecord r;
  r.region_kind = rk;
  r.mode = m;
  r.outcome.kind = k;
  r.outcome.mismatched = mismatched;
  r.outcome.total_queries = total;
  r.outcome.time_to_crash = std::chrono::milliseconds(tt_ms);
  r.outcome.queries_served = served;
  return r;
}

CampaignLogView view(std::vector<LogTrialRecord> trials,
                     const std::string& workload = "mini-kv") {
  CampaignLogView v;
  v.spec.id = workload;
  v.trials = std::move(trials);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("stats");

TEST_CASE("wilson intervals match the frozen oracle") {
  WilsonInterval w = wilson95(5, 20);
  CHECK(w.lo == doctest::Approx(0.11186170140766569).epsilon(1e-12));
  CHECK(w.hi == doctest::Approx(0.468700877618744).epsilon(1e-12));
  CHECK(w.contains(0.25));

  WilsonInterval zero = wilson95(0, 10);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == doctest::Approx(0.2775327998628892).epsilon(1e-12));
  CHECK(zero.width() > 0.0);
  CHECK(zero.contains(0.0));

  WilsonInterval one = wilson95(1, 1);
  CHECK(one.lo == doctest::Approx(0.20654931437723745).epsilon(1e-12));
  CHECK(one.hi == 1.0);

  WilsonInterval vacuous = wilson95(0, 0);
  CHECK(vacuous.lo == 0.0);
  CHECK(vacuous.hi == 1.0);

  for (std::uint64_t n : {4u, 16u, 64u, 256u})
    for (std::uint64_t s = 0; s <= n; s += n / 4)
      CHECK(wilson95(s, n).contains(double(s) / double(n)));
}

TEST_CASE("wilson width shrinks with trials at fixed p-hat") {
  double w20 = wilson95(5, 20).width();
  double w80 = wilson95(20, 80).width();
  double w320 = wilson95(80, 320).width();
  CHECK(w20 > w80);
  CHECK(w80 > w320);
  CHECK(w20 == doctest::Approx(0.3568391762110783).epsilon(1e-12));
  CHECK(w320 == doctest::Approx(0.09450818391291363).epsilon(1e-12));
}

TEST_CASE("profile aggregates a mixed cell with fractions summing to one") {
  std::vector<LogTrialRecord> ts;
  for (int i = 0; i < 2; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft,
                     TrialOutcome::Kind::Crash, 0, 0, 1500, 7));
  for (int i = 0; i < 3; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft,
                     TrialOutcome::Kind::Incorrect, 5, 100));
  for (int i = 0; i < 4; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft,
                     TrialOutcome::Kind::Masked, 0, 100));
  ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Hang));
  ts.push_back(
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::InfraInvalid));

  VulnerabilityProfile p = build_profile(view(ts));
  const CellStats* c = p.cell("mini-kv", RegionKind::Heap, ErrorMode::Soft);
  REQUIRE(c != nullptr);
  CHECK(c->valid() == 10);
  CHECK(c->infra_invalid == 1);
  CHECK(c->crash_probability() == doctest::Approx(0.2));
  CHECK(c->queries_observed == 700);  // incorrect + masked trials only
  CHECK(c->mismatched_queries == 15);
  double sum = c->crash_probability() + c->incorrect_fraction() +
               c->masked_fraction() + c->hang_fraction();
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(c->crash_interval().contains(c->crash_probability()));

  // Untouched cells are absent, never zero-filled.
  CHECK(p.cell("mini-kv", RegionKind::Stack, ErrorMode::Soft) == nullptr);
  CHECK(p.cell("mini-kv", RegionKind::Heap, ErrorMode::HardStuck1) == nullptr);
}

TEST_CASE("clean cells report a measurement ceiling, not zero evidence") {
  std::vector<LogTrialRecord> ts(10, rec(RegionKind::Heap, ErrorMode::Soft,
                                         TrialOutcome::Kind::Masked, 0, 1000));
  VulnerabilityProfile p = build_profile(view(ts));
  const CellStats* c = p.cell("mini-kv", RegionKind::Heap, ErrorMode::Soft);
  REQUIRE(c != nullptr);
  CHECK(c->crash_probability() == 0.0);
  CHECK(c->crash_interval().hi > 0.0);
  CHECK(*c->incorrect_per_billion() == 0.0);
  CHECK(c->incorrect_interval_per_billion()->hi > 0.0);
  CHECK(*c->rate_ceiling_per_billion() == doctest::Approx(1e9 / 10000.0));
}

TEST_CASE("three mismatches per million queries is 3000 per billion") {
  std::vector<LogTrialRecord> ts = {rec(RegionKind::Heap, ErrorMode::Soft,
                                        TrialOutcome::Kind::Incorrect, 3,
                                        1000000)};
  VulnerabilityProfile p = build_profile(view(ts));
  const CellStats* c = p.cell("mini-kv", RegionKind::Heap, ErrorMode::Soft);
  REQUIRE(c != nullptr);
  CHECK(*c->incorrect_per_billion() == doctest::Approx(3000.0));
  WilsonInterval w = *c->incorrect_interval_per_billion();
  CHECK(w.lo == doctest::Approx(1020.2712409681224).epsilon(1e-9));
  CHECK(w.hi == doctest::Approx(8821.149774312436).epsilon(1e-9));
  CHECK(!c->rate_ceiling_per_billion().has_value());
}

TEST_CASE("merging profiles equals pooling the logs and is associative") {
  std::vector<LogTrialRecord> a = {
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Crash, 0, 0,
          100, 1),
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Masked, 0, 50),
      rec(RegionKind::Stack, ErrorMode::Soft, TrialOutcome::Kind::Crash, 0, 0,
          5, 0),
  };
  std::vector<LogTrialRecord> b = {
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Incorrect, 2,
          50),
      rec(RegionKind::Private, ErrorMode::HardStuck1,
          TrialOutcome::Kind::Masked, 0, 50),
  };
  std::vector<LogTrialRecord> c = {
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Hang),
      rec(RegionKind::Stack, ErrorMode::Soft, TrialOutcome::Kind::Masked, 0,
          50),
  };

  std::vector<LogTrialRecord> all = a;
  all.insert(all.end(), b.begin(), b.end());
  all.insert(all.end(), c.begin(), c.end());

  VulnerabilityProfile pa = build_profile(view(a));
  VulnerabilityProfile pb = build_profile(view(b));
  VulnerabilityProfile pc = build_profile(view(c));
  VulnerabilityProfile pooled = build_profile(view(all));

  std::string want = profile_csv(pooled);
  CHECK(profile_csv(merge_profiles(merge_profiles(pa, pb), pc)) == want);
  CHECK(profile_csv(merge_profiles(pa, merge_profiles(pb, pc))) == want);

  std::reverse(all.begin(), all.end());
  CHECK(profile_csv(build_profile(view(all))) == want);
}

TEST_CASE("spread of incorrect rates in decades") {
  Spread s = spread_orders_of_magnitude(std::vector<double>{1.0, 1e6});
  CHECK(s.defined);
  CHECK(s.decades == doctest::Approx(6.0));

  s = spread_orders_of_magnitude(std::vector<double>{5.0, 5.0});
  CHECK(s.defined);
  CHECK(s.decades == doctest::Approx(0.0));

  s = spread_orders_of_magnitude(std::vector<double>{0.0, 1e3, 1e5});
  CHECK(s.defined);
  CHECK(s.decades == doctest::Approx(2.0));
  CHECK(s.zero_rates == 1);

  s = spread_orders_of_magnitude(std::vector<double>{0.0, 0.0});
  CHECK(!s.defined);
  CHECK(s.zero_rates == 2);
}

TEST_CASE("time to crash quantiles use nearest rank per error mode") {
  // Single crash: every quantile is that observation.
  TimeToCrashSummary one = time_to_crash_summary(
      view({rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Crash,
                0, 0, 2000, 13)}));
  REQUIRE(one.by_mode.count(ErrorMode::Soft) == 1);
  CrashModeSummary m = one.by_mode[ErrorMode::Soft];
  CHECK(m.crashes == 1);
  CHECK(m.time_ms.p10 == 2000.0);
  CHECK(m.time_ms.p50 == 2000.0);
  CHECK(m.time_ms.p90 == 2000.0);
  CHECK(m.queries_before_crash.p50 == 13.0);

  // 1..10 seconds: nearest rank puts p50 at the 5th observation.
  std::vector<LogTrialRecord> ts;
  for (int i = 1; i <= 10; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft,
                     TrialOutcome::Kind::Crash, 0, 0, i * 1000, i));
  TimeToCrashSummary ten = time_to_crash_summary(view(ts));
  CHECK(ten.by_mode[ErrorMode::Soft].time_ms.p50 == 5000.0);
  CHECK(ten.by_mode[ErrorMode::Soft].time_ms.p10 == 1000.0);
  CHECK(ten.by_mode[ErrorMode::Soft].time_ms.p90 == 9000.0);

  // Bimodal quick-to-crash vs slow-to-crash population.
  ts.clear();
  for (int i = 0; i < 50; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::Soft,
                     TrialOutcome::Kind::Crash, 0, 0, 100, 1));
  for (int i = 0; i < 50; ++i)
    ts.push_back(rec(RegionKind::Heap, ErrorMode::HardStuck0,
                     TrialOutcome::Kind::Crash, 0, 0, 50000, 900));
  TimeToCrashSummary bi = time_to_crash_summary(view(ts));
  CHECK(bi.by_mode.size() == 2);
  CHECK(bi.by_mode[ErrorMode::Soft].time_ms.p10 == 100.0);
  CHECK(bi.by_mode[ErrorMode::HardStuck0].time_ms.p90 == 50000.0);

  // Pooled into one mode the same sample keeps the bimodal tails.
  for (auto& r : ts) r.mode = ErrorMode::Soft;
  TimeToCrashSummary pooled = time_to_crash_summary(view(ts));
  CHECK(pooled.by_mode[ErrorMode::Soft].time_ms.p10 == 100.0);
  CHECK(pooled.by_mode[ErrorMode::Soft].time_ms.p90 == 50000.0);

  // No crashes at all: empty marker.
  CHECK(time_to_crash_summary(
            view({rec(RegionKind::Heap, ErrorMode::Soft,
                      TrialOutcome::Kind::Masked, 0, 10)}))
            .empty());
}

TEST_CASE("csv and json emitters") {
  std::vector<LogTrialRecord> ts = {
      rec(RegionKind::Heap, ErrorMode::Soft, TrialOutcome::Kind::Crash, 0, 0,
          900, 3),
      rec(RegionKind::Stack, ErrorMode::HardStuck1,
          TrialOutcome::Kind::Incorrect, 1, 200),
  };
  VulnerabilityProfile p = build_profile(view(ts, "mini-graph"));

  std::string csv = profile_csv(p);
  CHECK(csv.rfind("workload,region,mode,trials_valid,infra_invalid,crashes,",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 cells
  CHECK(csv.find("mini-graph,heap,soft,1,0,1,0,0,0,1,") != std::string::npos);
  CHECK(csv.find("mini-graph,stack,hard-stuck-at-1,1,0,0,1,0,0,0,") !=
        std::string::npos);

  nlohmann::json j = nlohmann::json::parse(profile_json(p));
  CHECK(j["schema"] == "hrmlab-profile-v1");
  REQUIRE(j["cells"].size() == 2);
  CHECK(j["cells"][0]["workload"] == "mini-graph");
  // The crash-only cell observed no queries, so its rate is null.
  CHECK(j["cells"][0]["incorrect_per_billion"].is_null());
  CHECK(j["cells"][1]["incorrect_per_billion"].get<double>() ==
        doctest::Approx(5e6));
  CHECK(j["cells"][1]["mismatched_queries"] == 1);
}

TEST_CASE("profile of a real campaign log matches its summary counts") {
  SamplingPlan plan;
  plan.spec.id = "mini-kv";
  plan.spec.kv_keys = 4;
  plan.spec.kv_value_len = 16;
  plan.spec.queries = 40;
  plan.region_filter = RegionKind::Heap;
  plan.targets = 25;
  plan.seed = 21;
  plan.modes = {ErrorMode::Soft, ErrorMode::HardStuck0};
  plan.trigger = InjectTrigger::at_start();

  char tmpl[] = "/tmp/hrmlab-stats-XXXXXX";
  int fd = mkstemp(tmpl);
  REQUIRE(fd >= 0);
  close(fd);
  CampaignResult r = run_campaign(plan, {}, tmpl);
  CampaignLogView v = read_campaign_log(tmpl);
  VulnerabilityProfile p = build_profile(v);

  std::uint64_t crash = 0, valid = 0, infra = 0;
  for (const auto& [k, c] : p.cells) {
    CHECK(k.workload == "mini-kv");
    CHECK(k.region == RegionKind::Heap);
    crash += c.crash;
    valid += c.valid();
    infra += c.infra_invalid;
    double sum = c.crash_probability() + c.incorrect_fraction() +
                 c.masked_fraction() + c.hang_fraction();
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(p.cells.size() == 2);  // one per error mode
  CHECK(crash == r.counts.crash);
  CHECK(valid == r.counts.valid());
  CHECK(infra == r.counts.infra_invalid);
  std::remove(tmpl);
}

TEST_SUITE_END();
