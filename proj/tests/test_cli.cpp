#include "doctest.h"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "hrmlab/campaign.hpp"
#include "hrmlab/explorer.hpp"
#include "hrmlab/frames.hpp"
#include "hrmlab/stats.hpp"
#include "hrmlab/workloads.hpp"

#include "json.hpp"

#ifndef HRMLAB_CLI_PATH
#error "test_cli.cpp requires the hrmlab CLI target"
#endif

using namespace hrmlab;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args,
                  const std::string& input = "",
                  const std::vector<std::string>& extra_env = {}) {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  REQUIRE(pipe(in_pipe) == 0);
  REQUIRE(pipe(out_pipe) == 0);
  REQUIRE(pipe(err_pipe) == 0);

  pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    dup2(in_pipe[0], 0);
    dup2(out_pipe[1], 1);
    dup2(err_pipe[1], 2);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                   err_pipe[0], err_pipe[1]})
      close(fd);
    setenv("HRMLAB_DATA_DIR", HRMLAB_DATA_DIR, 1);
    unsetenv("HRMLAB_LOG");
    for (const std::string& kv : extra_env) {
      auto eq = kv.find('=');
      setenv(kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str(), 1);
    }
    std::vector<char*> argv;
    std::string exe = HRMLAB_CLI_PATH;
    argv.push_back(exe.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(exe.c_str(), argv.data());
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);

  // Feed stdin fully, then close; pipe capacity dwarfs our inputs.
  std::size_t off = 0;
  while (off < input.size()) {
    ssize_t n = write(in_pipe[1], input.data() + off, input.size() - off);
    if (n <= 0) break;
    off += std::size_t(n);
  }
  close(in_pipe[1]);

  CliResult r;
  struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  bool open_fd[2] = {true, true};
  char buf[65536];
  while (open_fd[0] || open_fd[1]) {
    fds[0].fd = open_fd[0] ? out_pipe[0] : -1;
    fds[1].fd = open_fd[1] ? err_pipe[0] : -1;
    REQUIRE(poll(fds, 2, 60000) >= 0);
    for (int i = 0; i < 2; ++i) {
      if (!open_fd[i] || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
      ssize_t n = read(i == 0 ? out_pipe[0] : err_pipe[0], buf, sizeof buf);
      if (n > 0)
        (i == 0 ? r.out : r.err).append(buf, std::size_t(n));
      else
        open_fd[i] = false;
    }
  }
  close(out_pipe[0]);
  close(err_pipe[0]);

  int status = 0;
  REQUIRE(waitpid(pid, &status, 0) == pid);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status)
                                  : 128 + WTERMSIG(status);
  return r;
}

std::string temp_dir() {
  char tmpl[] = "/tmp/hrmlab-cli-XXXXXX";
  REQUIRE(mkdtemp(tmpl) != nullptr);
  return tmpl;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  f << content;
}

const char* kArenaPlan = R"(
[workload]
id = "mini-kv"
kv_keys = 32
kv_value_len = 24
queries = 120

[backend]
kind = "arena"

[sampling]
seed = 404
targets = 25
modes = ["soft", "hard-stuck-at-1"]
trigger = "at-start"

[limits]
trial_timeout_ms = 3000
)";

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("help and usage errors") {
  CliResult r = run_cli({"--help"});
  CHECK(r.exit_code == 0);
  for (const char* sub : {"campaign", "hrm", "workload", "codec"})
    CHECK(contains(r.out, sub));

  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"campaign"}).exit_code == 2);
  CHECK(run_cli({"campaign", "run", "--no-such-flag"}).exit_code == 2);
}

TEST_CASE("codec selftest passes, times under budget, and is not vacuous") {
  auto t0 = std::chrono::steady_clock::now();
  CliResult r = run_cli({"codec", "selftest", "--seed", "7"});
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  CHECK(r.exit_code == 0);
  CHECK(contains(r.out, "conformance: PASS"));
  CHECK(contains(r.out, "secded double-bit flips: 255600 cases, 0 failures"));
  CHECK(ms < 10000);

  // Without --seed the drawn seed is printed for reproducibility.
  CliResult drawn = run_cli({"codec", "selftest"});
  CHECK(drawn.exit_code == 0);
  CHECK(drawn.out.rfind("seed ", 0) == 0);

  // A deliberately broken decoder must fail the suite.
  CliResult bad = run_cli({"codec", "selftest", "--seed", "7",
                           "--defect-fixture"});
  CHECK(bad.exit_code == 1);
  CHECK(contains(bad.out, "conformance: FAIL"));
}

TEST_CASE("workload golden and run verify round trip") {
  std::string dir = temp_dir();
  std::string golden = dir + "/kv.golden";
  CliResult g = run_cli({"workload", "golden", "--id", "mini-kv", "--kv-keys",
                         "64", "--queries", "200", "--out", golden});
  CHECK(g.exit_code == 0);
  CHECK(contains(g.out, "queries=200"));

  CliResult ok = run_cli({"workload", "run", "--id", "mini-kv", "--kv-keys",
                          "64", "--queries", "200", "--golden", golden});
  CHECK(ok.exit_code == 0);
  CHECK(contains(ok.out, "golden match"));

  CliResult bad = run_cli({"workload", "run", "--id", "mini-kv", "--kv-keys",
                           "65", "--queries", "200", "--golden", golden});
  CHECK(bad.exit_code == 1);
  CHECK(contains(bad.out, "golden mismatch"));

  CHECK(run_cli({"workload", "golden", "--id", "no-such"}).exit_code == 2);
}

TEST_CASE("workload serve speaks the framed protocol") {
  WorkloadSpec spec;
  spec.id = "mini-kv";
  spec.kv_keys = 8;
  spec.kv_value_len = 8;
  spec.queries = 10;
  auto w = make_workload(spec);
  std::string input;
  for (std::uint64_t i = 0; i < w->query_count(); ++i)
    append_frame(input, w->request(i));

  CliResult r = run_cli({"workload", "run", "--serve", "--id", "mini-kv",
                         "--kv-keys", "8", "--kv-value-len", "8", "--queries",
                         "10"},
                        input);
  CHECK(r.exit_code == 0);
  std::vector<std::string> frames = split_frames(r.out);
  REQUIRE(frames.size() == 11);
  CHECK(frames[0].rfind("READY dataset=", 0) == 0);
  GoldenResult golden = golden_run(spec);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(frames[i + 1] == golden.responses[i]);
}

TEST_CASE("hrm eval reproduces the headline design points") {
  CliResult dr = run_cli({"hrm", "eval", "--design", "detect-recover",
                          "--format", "brief"});
  CHECK(dr.exit_code == 0);
  CHECK(contains(dr.out, "availability=0.999711"));
  CHECK(contains(dr.out, "savings_pct=2.8990"));

  CliResult ts = run_cli({"hrm", "eval", "--design", "typical-server",
                          "--format", "brief"});
  CHECK(contains(ts.out, "savings_pct=0.0000"));

  CliResult j = run_cli({"hrm", "eval", "--design", "detect-recover-l"});
  CHECK(j.exit_code == 0);
  nlohmann::json report = nlohmann::json::parse(j.out);
  CHECK(report["availability"].get<double>() ==
        doctest::Approx(0.999131965).epsilon(1e-8));
  CHECK(report["server_cost_savings_pct"].get<double>() ==
        doctest::Approx(4.713803).epsilon(1e-5));

  CHECK(run_cli({"hrm", "eval", "--design", "nonsense"}).exit_code == 2);

  // Custom design file.
  std::string dir = temp_dir();
  write_file(dir + "/d.toml", R"(
[design]
name = "all-secded"
granularity = "whole-system"

[assignment]
technique = "secded-72-64"
response = "crash-on-detect"
grade = "tested"
)");
  CliResult f = run_cli({"hrm", "eval", "--design-file", dir + "/d.toml",
                         "--format", "brief"});
  CHECK(f.exit_code == 0);
  CHECK(contains(f.out, "design=all-secded"));
}

TEST_CASE("hrm explore row count equals the enumeration count") {
  // The CLI's shipped space over the calibrated regions.
  CostModel cm = cost_model_from_file(std::string(HRMLAB_DATA_DIR) +
                                      "/calib/cost_model.toml");
  DesignSpace s;
  s.techniques = {ProtectionTechnique::None, ProtectionTechnique::ParityPerWord,
                  ProtectionTechnique::Secded7264};
  s.responses = {SoftwareResponse::None, SoftwareResponse::CrashOnDetect,
                 SoftwareResponse::ReloadCleanCopy, SoftwareResponse::DropQuery};
  s.grades = {MemoryGrade::tested(), cm.less_tested_grade};
  s.granularities = {Granularity::WholeSystem, Granularity::PerRegion};
  s.regions = cm.regions;
  const std::size_t expected = enumerate_designs(s).points.size();

  std::string dir = temp_dir();
  CliResult r = run_cli({"hrm", "explore", "--out", dir + "/space.csv"});
  CHECK(r.exit_code == 0);
  std::ifstream f(dir + "/space.csv");
  std::size_t lines = 0;
  std::string line, header;
  while (std::getline(f, line)) {
    if (lines == 0) header = line;
    ++lines;
  }
  CHECK(header ==
        "design,availability,savings_pct,crashes_per_month,"
        "incorrect_per_billion");
  CHECK(lines == expected + 1);

  // Builtins table with the availability constraint applied.
  CliResult c = run_cli({"hrm", "explore", "--builtins", "--min-availability",
                         "0.999", "--format", "json"});
  CHECK(c.exit_code == 0);
  nlohmann::json j = nlohmann::json::parse(c.out);
  REQUIRE(j["designs"].size() == 3);
  CHECK(j["designs"][0]["design"] == "detect-recover-l");
  double prev = 1e9;
  for (const auto& d : j["designs"]) {
    CHECK(d["availability"].get<double>() >= 0.999);
    CHECK(d["savings_pct"].get<double>() <= prev);
    prev = d["savings_pct"].get<double>();
  }
}

TEST_CASE("campaign run writes a deterministic, resumable log") {
  std::string dir = temp_dir();
  write_file(dir + "/plan.toml", kArenaPlan);

  CliResult a = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                         "--out", dir + "/a.jsonl", "--parallelism", "4"});
  CHECK(a.exit_code == 0);
  CHECK(contains(a.out, "complete true"));
  CHECK(contains(a.out, "seed 404"));

  // Existing log without --resume is refused.
  CliResult again = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                             "--out", dir + "/a.jsonl"});
  CHECK(again.exit_code == 2);
  CHECK(contains(again.err, "--resume"));

  // Interrupted then resumed equals uninterrupted, at any parallelism.
  CliResult part = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                            "--out", dir + "/b.jsonl", "--max-trials", "17"});
  CHECK(part.exit_code == 0);
  CHECK(contains(part.out, "complete false"));
  CliResult rest = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                            "--out", dir + "/b.jsonl", "--resume",
                            "--parallelism", "3"});
  CHECK(rest.exit_code == 0);
  CHECK(contains(rest.out, "complete true"));
  CHECK(campaign_log_canonical(dir + "/a.jsonl") ==
        campaign_log_canonical(dir + "/b.jsonl"));

  // Missing plan file names the path.
  CliResult missing = run_cli({"campaign", "run", "--plan", dir + "/nope.toml",
                               "--out", dir + "/c.jsonl"});
  CHECK(missing.exit_code == 2);
  CHECK(contains(missing.err, dir + "/nope.toml"));

  // Diagnostics are opt-in via HRMLAB_LOG and stay on stderr.
  CHECK(a.err.empty());
  CliResult loud = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                            "--out", dir + "/d.jsonl"},
                           "", {"HRMLAB_LOG=info"});
  CHECK(loud.exit_code == 0);
  CHECK(contains(loud.err, "[hrmlab]"));
}

TEST_CASE("campaign report merges logs exactly like the library") {
  std::string dir = temp_dir();
  write_file(dir + "/p1.toml", kArenaPlan);
  std::string p2 = kArenaPlan;
  p2.replace(p2.find("seed = 404"), 10, "seed = 405");
  write_file(dir + "/p2.toml", p2);

  REQUIRE(run_cli({"campaign", "run", "--plan", dir + "/p1.toml", "--out",
                   dir + "/l1.jsonl"})
              .exit_code == 0);
  REQUIRE(run_cli({"campaign", "run", "--plan", dir + "/p2.toml", "--out",
                   dir + "/l2.jsonl"})
              .exit_code == 0);

  CliResult merged = run_cli({"campaign", "report", "--log", dir + "/l1.jsonl",
                              "--log", dir + "/l2.jsonl", "--format", "csv"});
  CHECK(merged.exit_code == 0);

  VulnerabilityProfile expect =
      merge_profiles(build_profile(read_campaign_log(dir + "/l1.jsonl")),
                     build_profile(read_campaign_log(dir + "/l2.jsonl")));
  CHECK(merged.out == profile_csv(expect));

  // JSON format parses and carries the same cells.
  CliResult j = run_cli({"campaign", "report", "--log", dir + "/l1.jsonl"});
  CHECK(j.exit_code == 0);
  nlohmann::json parsed = nlohmann::json::parse(j.out);
  CHECK(parsed["schema"] == "hrmlab-profile-v1");
}

TEST_CASE("debugger campaign through the cli is deterministic") {
  std::string dir = temp_dir();
  write_file(dir + "/plan.toml", R"(
[workload]
id = "mini-kv"
kv_keys = 128
kv_value_len = 64
queries = 60

[backend]
kind = "debugger"

[sampling]
seed = 77
targets = 6
region = "heap"
modes = ["soft"]
trigger = "at-start"

[limits]
trial_timeout_ms = 8000
)");
  CliResult a = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                         "--out", dir + "/a.jsonl"});
  CHECK(a.exit_code == 0);
  CHECK(contains(a.out, "complete true"));
  CHECK(contains(a.out, "infra_rate 0.000000"));

  CliResult b = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                         "--out", dir + "/b.jsonl"});
  CHECK(b.exit_code == 0);
  CHECK(campaign_log_canonical(dir + "/a.jsonl") ==
        campaign_log_canonical(dir + "/b.jsonl"));

  CampaignLogView view = read_campaign_log(dir + "/a.jsonl");
  CHECK(view.trials.size() == 6);
  CHECK(view.backend == "debugger");
}

TEST_CASE("unreliable trial infrastructure exits 3") {
  std::string dir = temp_dir();
  // The scout invocation consumes the one good launch; every trial's target
  // then dies before the READY handshake, so all trials are InfraInvalid.
  write_file(dir + "/flaky.sh", std::string("#!/bin/sh\n") +
                                    "if [ -e " + dir + "/used ]; then exit 1; fi\n" +
                                    ": > " + dir + "/used\n" +
                                    "exec " + HRMLAB_CLI_PATH +
                                    " workload run --serve --id mini-kv "
                                    "--kv-keys 8 --queries 10\n");
  write_file(dir + "/plan.toml", std::string(R"(
[workload]
id = "mini-kv"
kv_keys = 8
queries = 10

[backend]
kind = "debugger"
argv = ["/bin/sh", ")") + dir + R"(/flaky.sh"]

[sampling]
seed = 5
targets = 2
region = "heap"
modes = ["soft"]
trigger = "at-start"

[limits]
trial_timeout_ms = 5000
)");
  CliResult r = run_cli({"campaign", "run", "--plan", dir + "/plan.toml",
                         "--out", dir + "/log.jsonl"});
  CHECK(r.exit_code == 3);
  CHECK(contains(r.err, "infrastructure"));
  CHECK(contains(r.out, "infra_invalid=2"));
}

TEST_SUITE_END();
