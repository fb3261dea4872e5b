#include <unistd.h>

#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hrmlab/campaign.hpp"
#include "hrmlab/codecs.hpp"
#include "hrmlab/errors.hpp"
#include "hrmlab/explorer.hpp"
#include "hrmlab/frames.hpp"
#include "hrmlab/hrm_model.hpp"
#include "hrmlab/sha256.hpp"
#include "hrmlab/stats.hpp"
#include "hrmlab/workloads.hpp"

namespace fs = std::filesystem;
using namespace hrmlab;

namespace {

// HRMLAB_LOG: quiet (default), info, debug. Diagnostics go to stderr so
// framed stdout channels stay clean.
int log_level() {
  static const int lvl = [] {
    const char* v = std::getenv("HRMLAB_LOG");
    if (!v || !*v) return 0;
    const std::string s = v;
    if (s == "debug" || s == "2") return 2;
    if (s == "quiet" || s == "0") return 0;
    return 1;
  }();
  return lvl;
}

void logi(const std::string& m) {
  if (log_level() >= 1) std::fprintf(stderr, "[hrmlab] %s\n", m.c_str());
}

void logd(const std::string& m) {
  if (log_level() >= 2) std::fprintf(stderr, "[hrmlab] %s\n", m.c_str());
}

std::string data_dir() {
  const char* v = std::getenv("HRMLAB_DATA_DIR");
  return v && *v ? v : "data";
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string(what) + " file not found: " + path);
}

std::string self_exe() {
  std::error_code ec;
  fs::path p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? "hrmlab" : p.string();
}

void write_output(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::fwrite(content.data(), 1, content.size(), stdout);
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw SetupError("cannot open output file " + out_path);
  f << content;
}

struct CalibPaths {
  std::string error_model;
  std::string cost_model;
  std::string profile;
};

void add_calib_flags(CLI::App* cmd, CalibPaths& p) {
  cmd->add_option("--error-model", p.error_model,
                  "error model TOML (default <data>/calib/error_model.toml)");
  cmd->add_option("--cost-model", p.cost_model,
                  "cost model TOML (default <data>/calib/cost_model.toml)");
  cmd->add_option("--profile", p.profile,
                  "vulnerability profile TOML (default "
                  "<data>/calib/vulnerability.toml)");
}

struct Calib {
  ErrorModel em;
  CostModel cm;
  VulnerabilityProfile prof;
};

Calib load_calib(CalibPaths p) {
  if (p.error_model.empty())
    p.error_model = data_dir() + "/calib/error_model.toml";
  if (p.cost_model.empty()) p.cost_model = data_dir() + "/calib/cost_model.toml";
  if (p.profile.empty()) p.profile = data_dir() + "/calib/vulnerability.toml";
  require_file(p.error_model, "error model");
  require_file(p.cost_model, "cost model");
  require_file(p.profile, "profile");
  logd("calibration: " + p.error_model + ", " + p.cost_model + ", " +
       p.profile);
  return {error_model_from_file(p.error_model),
          cost_model_from_file(p.cost_model), profile_from_file(p.profile)};
}

void add_spec_flags(CLI::App* cmd, WorkloadSpec& spec) {
  cmd->add_option("--id", spec.id, "workload id: mini-kv|mini-search|mini-graph");
  cmd->add_option("--queries", spec.queries, "query count (0 = default)");
  cmd->add_option("--dataset-seed", spec.dataset_seed, "dataset seed");
  cmd->add_option("--query-seed", spec.query_seed, "query stream seed");
  cmd->add_option("--kv-keys", spec.kv_keys, "mini-kv key count");
  cmd->add_option("--kv-value-len", spec.kv_value_len, "mini-kv value bytes");
  cmd->add_option("--search-docs", spec.search_docs, "mini-search documents");
  cmd->add_option("--graph-nodes", spec.graph_nodes, "mini-graph nodes");
}

WorkloadSpec spec_from_plan_or_flags(const std::string& plan_path,
                                     const WorkloadSpec& flags) {
  if (plan_path.empty()) {
    if (flags.id.empty())
      throw ConfigError("workload: pass --plan or --id");
    return flags;
  }
  require_file(plan_path, "plan");
  return plan_from_file(plan_path).spec;
}

// ---------------------------------------------------------------- campaign

int cmd_campaign_run(const std::string& plan_path, const std::string& out_path,
                     const std::string& backend_override, int parallelism,
                     std::optional<std::uint64_t> seed,
                     std::uint64_t max_trials, bool resume) {
  require_file(plan_path, "plan");
  SamplingPlan plan = plan_from_file(plan_path);
  if (!backend_override.empty()) plan.backend = backend_override;
  if (seed) plan.seed = *seed;
  if (plan.backend == "debugger" && plan.target_argv.empty()) {
    plan.target_argv = {self_exe(), "workload", "run", "--serve", "--plan",
                        fs::absolute(plan_path).string()};
    logd("debugger target: self-serve via " + plan.target_argv[0]);
  }

  std::error_code ec;
  if (!resume && fs::exists(out_path) && fs::file_size(out_path, ec) > 0)
    throw ConfigError("log " + out_path +
                      " already exists; pass --resume to continue it");

  RunOptions opts;
  opts.parallelism = parallelism;
  opts.max_new_trials = max_trials;
  logi("plan " + plan_hash(plan) + " backend=" + plan.backend +
       " parallelism=" + std::to_string(parallelism));

  CampaignResult r = run_campaign(plan, opts, out_path);
  std::printf("plan %s\n", plan_hash(plan).c_str());
  std::printf("seed %llu\n", (unsigned long long)plan.seed);
  std::printf("log %s\n", r.log_path.c_str());
  std::printf("trials planned=%llu crash=%llu incorrect=%llu masked=%llu "
              "hang=%llu infra_invalid=%llu\n",
              (unsigned long long)r.planned_trials,
              (unsigned long long)r.counts.crash,
              (unsigned long long)r.counts.incorrect,
              (unsigned long long)r.counts.masked,
              (unsigned long long)r.counts.hang,
              (unsigned long long)r.counts.infra_invalid);
  std::printf("infra_rate %.6f\n", r.infra_rate);
  std::printf("complete %s\n", r.complete ? "true" : "false");
  if (r.complete && r.infra_rate > plan.max_infra_rate) {
    std::fprintf(stderr,
                 "hrmlab: infrastructure failure rate %.4f exceeds the %.4f "
                 "limit; results are not trustworthy\n",
                 r.infra_rate, plan.max_infra_rate);
    return 3;
  }
  return 0;
}

int cmd_campaign_report(const std::vector<std::string>& logs,
                        const std::string& format,
                        const std::string& out_path) {
  VulnerabilityProfile merged;
  bool first = true;
  for (const std::string& p : logs) {
    require_file(p, "campaign log");
    VulnerabilityProfile one = build_profile(read_campaign_log(p));
    merged = first ? one : merge_profiles(merged, one);
    first = false;
  }
  logi("report over " + std::to_string(logs.size()) + " log(s), " +
       std::to_string(merged.cells.size()) + " cells");
  write_output(out_path,
               format == "csv" ? profile_csv(merged) : profile_json(merged));
  return 0;
}

// --------------------------------------------------------------------- hrm

DesignPoint resolve_design(const std::string& name,
                           const std::string& design_file, const CostModel& cm) {
  if (!design_file.empty()) {
    require_file(design_file, "design");
    return design_point_from_file(design_file, cm);
  }
  std::string known;
  for (const DesignPoint& dp : builtin_design_points(cm)) {
    if (dp.name == name) return dp;
    known += known.empty() ? "" : ", ";
    known += dp.name;
  }
  throw ConfigError("unknown design '" + name + "' (built-ins: " + known +
                    "); pass --design-file for a custom one");
}

int cmd_hrm_eval(const std::string& design, const std::string& design_file,
                 const CalibPaths& paths, const std::string& format,
                 const std::string& out_path) {
  Calib c = load_calib(paths);
  DesignPoint dp = resolve_design(design, design_file, c.cm);
  ReliabilityCostReport r = evaluate_design(dp, c.prof, c.em, c.cm);
  if (format == "brief") {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "design=%s availability=%.6f savings_pct=%.4f "
                  "crashes_per_month=%.6f\n",
                  r.design.c_str(), r.availability, r.server_cost_savings_pct,
                  r.crashes_per_month);
    write_output(out_path, buf);
  } else {
    write_output(out_path, report_json(r) + "\n");
  }
  return 0;
}

DesignSpace default_space(const CostModel& cm) {
  DesignSpace s;
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord,
                  ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect,
                 SoftwareResponse::ReloadCleanCopy, SoftwareResponse::DropQuery};
  s.grades = {MemoryGrade::tested(), cm.less_tested_grade};
  s.granularities = {Granularity::WholeSystem};
  if (cm.regions.size() >= 2)
    s.granularities.push_back(Granularity::PerRegion);
  s.regions = cm.regions;
  return s;
}

int cmd_hrm_explore(const CalibPaths& paths, bool builtins,
                    std::optional<double> min_availability, unsigned threads,
                    bool third_axis, const std::string& format,
                    const std::string& out_path) {
  Calib c = load_calib(paths);
  std::vector<DesignPoint> points;
  if (builtins) {
    points = builtin_design_points(c.cm);
    logi("evaluating the 5 built-in design points");
  } else {
    Enumeration e = enumerate_designs(default_space(c.cm));
    logi("enumerated " + std::to_string(e.points.size()) + " designs (" +
         std::to_string(e.filtered) + " filtered of " +
         std::to_string(e.considered) + " considered)");
    points = std::move(e.points);
  }
  std::vector<ReliabilityCostReport> reports =
      evaluate_designs(points, c.prof, c.em, c.cm, threads);
  if (min_availability) reports = constrain(reports, *min_availability);
  ParetoOptions popts;
  popts.include_incorrect_axis = third_axis;
  write_output(out_path, format == "json" ? explorer_json(reports, popts)
                                          : explorer_csv(reports));
  return 0;
}

// ---------------------------------------------------------------- workload

int cmd_workload_golden(const WorkloadSpec& spec, const std::string& out_path) {
  if (spec.id.empty()) throw ConfigError("workload golden: --id is required");
  if (out_path.empty()) throw ConfigError("workload golden: --out is required");
  GoldenResult g = golden_run(spec);
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw SetupError("cannot open output file " + out_path);
  const std::string blob = golden_file_pack(spec, g);
  f.write(blob.data(), std::streamsize(blob.size()));
  std::printf("golden %s queries=%zu responses_sha256=%s dataset_sha256=%s\n",
              spec.id.c_str(), g.responses.size(),
              g.response_sha256_hex.c_str(), g.dataset_sha256_hex.c_str());
  return 0;
}

// Framed request/response child for the debugger backend. stdout carries
// only frames: READY first, then one response per request until EOF.
int serve_loop(const WorkloadSpec& spec) {
  auto w = make_workload(spec);
  auto arena = w->make_arena();
  w->build(*arena);
  const std::string dataset = Sha256::hex_of(arena->snapshot());
  write_frame_fd(STDOUT_FILENO, "READY dataset=" + dataset);
  logd("serving " + spec.id + " dataset=" + dataset);
  for (;;) {
    std::optional<std::string> req = read_frame_fd(STDIN_FILENO);
    if (!req) return 0;
    std::string resp;
    try {
      resp = w->serve(*arena, *req);
    } catch (const ArenaAccessViolation&) {
      // Out-of-bounds access: die the way a wild pointer would.
      ::raise(SIGSEGV);
      return 139;
    } catch (const StepBudgetExceeded&) {
      // Runaway loop: stall so the supervisor classifies a hang.
      for (;;) ::pause();
    }
    write_frame_fd(STDOUT_FILENO, resp);
  }
}

int cmd_workload_run(const std::string& plan_path, const WorkloadSpec& flags,
                     bool serve, const std::string& golden_path) {
  WorkloadSpec spec = spec_from_plan_or_flags(plan_path, flags);
  if (serve) return serve_loop(spec);

  GoldenResult g = golden_run(spec);
  std::printf("workload %s queries=%zu responses_sha256=%s dataset_sha256=%s\n",
              spec.id.c_str(), g.responses.size(),
              g.response_sha256_hex.c_str(), g.dataset_sha256_hex.c_str());
  if (!golden_path.empty()) {
    require_file(golden_path, "golden");
    std::ifstream f(golden_path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    GoldenLoaded ref = golden_file_unpack(blob);
    std::uint64_t mismatched = 0;
    const std::size_t n = std::min(ref.responses.size(), g.responses.size());
    for (std::size_t i = 0; i < n; ++i)
      if (ref.responses[i] != g.responses[i]) ++mismatched;
    mismatched += std::max(ref.responses.size(), g.responses.size()) - n;
    if (mismatched || ref.dataset_sha256_hex != g.dataset_sha256_hex) {
      std::printf("golden mismatch: %llu responses differ, dataset %s\n",
                  (unsigned long long)mismatched,
                  ref.dataset_sha256_hex == g.dataset_sha256_hex ? "equal"
                                                                 : "differs");
      return 1;
    }
    std::printf("golden match: %s\n", golden_path.c_str());
  }
  return 0;
}

// ------------------------------------------------------------------- codec

int cmd_codec_selftest(std::optional<std::uint64_t> seed, bool defect_fixture) {
  std::uint64_t s;
  if (seed) {
    s = *seed;
  } else {
    s = std::random_device{}();
    std::printf("seed %llu\n", (unsigned long long)s);
  }
  bool ok = false;
  std::string report = codec_selftest_report(ok, s, defect_fixture);
  std::fputs(report.c_str(), stdout);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory fault-injection lab and reliability-design evaluator"};
  app.require_subcommand(1);

  // campaign run | report
  CLI::App* campaign = app.add_subcommand("campaign", "fault-injection campaigns");
  campaign->require_subcommand(1);

  std::string cr_plan, cr_out, cr_backend;
  int cr_par = 1;
  std::optional<std::uint64_t> cr_seed;
  std::uint64_t cr_max = 0;
  bool cr_resume = false;
  CLI::App* crun = campaign->add_subcommand("run", "execute a campaign plan");
  crun->add_option("--plan", cr_plan, "plan TOML")->required();
  crun->add_option("--out", cr_out, "JSONL log path")->required();
  crun->add_option("--backend", cr_backend, "override plan backend: arena|debugger");
  crun->add_option("--parallelism", cr_par, "worker count")
      ->check(CLI::Range(1, 64));
  crun->add_option("--seed", cr_seed, "override the plan's sampling seed");
  crun->add_option("--max-trials", cr_max, "stop after N new trials (0 = all)");
  crun->add_flag("--resume", cr_resume, "continue an existing log");

  std::vector<std::string> rp_logs;
  std::string rp_format = "json", rp_out;
  CLI::App* crep = campaign->add_subcommand("report", "profile stats from logs");
  crep->add_option("--log", rp_logs, "campaign log (repeatable; merged)")
      ->required();
  crep->add_option("--format", rp_format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  crep->add_option("--out", rp_out, "output file (default stdout)");

  // hrm eval | explore
  CLI::App* hrm = app.add_subcommand("hrm", "reliability/cost model");
  hrm->require_subcommand(1);

  std::string he_design = "typical-server", he_file, he_format = "json", he_out;
  CalibPaths he_paths;
  CLI::App* heval = hrm->add_subcommand("eval", "evaluate one design point");
  heval->add_option("--design", he_design, "built-in design point name");
  heval->add_option("--design-file", he_file, "design point TOML");
  add_calib_flags(heval, he_paths);
  heval->add_option("--format", he_format, "json|brief")
      ->check(CLI::IsMember({"json", "brief"}));
  heval->add_option("--out", he_out, "output file (default stdout)");

  CalibPaths hx_paths;
  bool hx_builtins = false, hx_third = false;
  std::optional<double> hx_min;
  unsigned hx_threads = 0;
  std::string hx_format = "csv", hx_out;
  CLI::App* hexp = hrm->add_subcommand("explore", "enumerate and rank designs");
  add_calib_flags(hexp, hx_paths);
  hexp->add_flag("--builtins", hx_builtins,
                 "evaluate the five built-in points instead of the full space");
  hexp->add_option("--min-availability", hx_min,
                   "drop designs below this availability, order by savings");
  hexp->add_option("--threads", hx_threads, "evaluation workers (0 = auto)");
  hexp->add_flag("--third-axis", hx_third,
                 "include the incorrect-query exposure index in dominance");
  hexp->add_option("--format", hx_format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  hexp->add_option("--out", hx_out, "output file (default stdout)");

  // workload golden | run
  CLI::App* workload = app.add_subcommand("workload", "bundled workloads");
  workload->require_subcommand(1);

  WorkloadSpec wg_spec;
  std::string wg_out;
  CLI::App* wgold = workload->add_subcommand("golden", "record a golden file");
  add_spec_flags(wgold, wg_spec);
  wgold->add_option("--out", wg_out, "golden file path");

  WorkloadSpec wr_spec;
  std::string wr_plan, wr_golden;
  bool wr_serve = false;
  CLI::App* wrun = workload->add_subcommand("run", "run a workload error-free");
  wrun->add_option("--plan", wr_plan, "take the workload spec from a plan TOML");
  add_spec_flags(wrun, wr_spec);
  wrun->add_flag("--serve", wr_serve,
                 "framed stdin/stdout server (debugger backend target)");
  wrun->add_option("--golden", wr_golden, "verify against a recorded golden file");

  // codec selftest
  CLI::App* codec = app.add_subcommand("codec", "protection codecs");
  codec->require_subcommand(1);
  std::optional<std::uint64_t> cs_seed;
  bool cs_defect = false;
  CLI::App* cself = codec->add_subcommand("selftest", "exhaustive conformance");
  cself->add_option("--seed", cs_seed,
                    "word-sample seed (default: drawn and printed)");
  cself->add_flag("--defect-fixture", cs_defect,
                  "run against a deliberately broken decoder (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    // Usage problems are plan errors; --help/--version exit 0.
    return rc == 0 ? 0 : 2;
  }

  try {
    if (crun->parsed())
      return cmd_campaign_run(cr_plan, cr_out, cr_backend, cr_par, cr_seed,
                              cr_max, cr_resume);
    if (crep->parsed()) return cmd_campaign_report(rp_logs, rp_format, rp_out);
    if (heval->parsed())
      return cmd_hrm_eval(he_design, he_file, he_paths, he_format, he_out);
    if (hexp->parsed())
      return cmd_hrm_explore(hx_paths, hx_builtins, hx_min, hx_threads,
                             hx_third, hx_format, hx_out);
    if (wgold->parsed()) return cmd_workload_golden(wg_spec, wg_out);
    if (wrun->parsed())
      return cmd_workload_run(wr_plan, wr_spec, wr_serve, wr_golden);
    if (cself->parsed()) return cmd_codec_selftest(cs_seed, cs_defect);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "hrmlab: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "hrmlab: %s\n", e.what());
    return 2;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "hrmlab: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "hrmlab: %s\n", e.what());
    return 1;
  }
  return 2;
}
