#include "hrmlab/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <poll.h>
#include <unistd.h>

#include "json.hpp"

#include "hrmlab/arena.hpp"
#include "hrmlab/debugger.hpp"
#include "hrmlab/errors.hpp"
#include "hrmlab/frames.hpp"
#include "hrmlab/sha256.hpp"

namespace hrmlab {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- comparator

Comparator Comparator::from_string(const std::string& s) {
  Comparator c;
  if (s == "byte-exact") {
    c.kind = Kind::ByteExact;
    return c;
  }
  if (s == "per-query-exact") {
    c.kind = Kind::PerQueryExact;
    return c;
  }
  unsigned k = 0;
  double thr = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "top-k-overlap(%u,%lf%c", &k, &thr, &tail) == 3 &&
      tail == ')' && k >= 1 && thr >= 0.0 && thr <= 1.0) {
    c.kind = Kind::TopKOverlap;
    c.k = k;
    c.threshold = thr;
    return c;
  }
  throw ConfigError("comparator: unrecognized spec '" + s + "'");
}

std::string Comparator::to_string() const {
  switch (kind) {
    case Kind::ByteExact: return "byte-exact";
    case Kind::PerQueryExact: return "per-query-exact";
    case Kind::TopKOverlap: {
      std::ostringstream o;
      o << "top-k-overlap(" << k << "," << threshold << ")";
      return o.str();
    }
  }
  return "per-query-exact";
}

namespace {

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

std::uint64_t compare_output(const std::vector<std::string>& actual,
                             const std::vector<std::string>& golden,
                             const Comparator& cmp) {
  std::size_t n = std::min(actual.size(), golden.size());
  std::uint64_t mismatched = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cmp.kind == Comparator::Kind::TopKOverlap) {
      std::vector<std::string> g = split_tokens(golden[i]);
      std::vector<std::string> a = split_tokens(actual[i]);
      if (g.size() > cmp.k) g.resize(cmp.k);
      if (a.size() > cmp.k) a.resize(cmp.k);
      std::uint32_t k_eff = std::uint32_t(std::min<std::size_t>(cmp.k, g.size()));
      if (k_eff == 0) {
        if (!a.empty()) ++mismatched;
        continue;
      }
      std::set<std::string> gset(g.begin(), g.end());
      std::uint32_t inter = 0;
      for (const auto& t : a)
        if (gset.erase(t)) ++inter;
      if (double(inter) / double(k_eff) < cmp.threshold) ++mismatched;
    } else {
      // Byte-exact and per-query-exact coincide for framed string records.
      if (actual[i] != golden[i]) ++mismatched;
    }
  }
  return mismatched;
}

// ---------------------------------------------------------------- outcomes

const char* trial_outcome_name(TrialOutcome::Kind k) {
  switch (k) {
    case TrialOutcome::Kind::Crash: return "crash";
    case TrialOutcome::Kind::Incorrect: return "incorrect";
    case TrialOutcome::Kind::Masked: return "masked";
    case TrialOutcome::Kind::Hang: return "hang";
    case TrialOutcome::Kind::InfraInvalid: return "infra-invalid";
  }
  return "masked";
}

std::optional<TrialOutcome::Kind> trial_outcome_from_name(const std::string& s) {
  if (s == "crash") return TrialOutcome::Kind::Crash;
  if (s == "incorrect") return TrialOutcome::Kind::Incorrect;
  if (s == "masked") return TrialOutcome::Kind::Masked;
  if (s == "hang") return TrialOutcome::Kind::Hang;
  if (s == "infra-invalid") return TrialOutcome::Kind::InfraInvalid;
  return std::nullopt;
}

TrialOutcome classify_outcome(const ExitStatus& status,
                              const std::vector<std::string>& output,
                              const std::vector<std::string>& golden,
                              std::chrono::milliseconds elapsed,
                              std::chrono::milliseconds timeout,
                              const Comparator& cmp) {
  TrialOutcome o;
  o.queries_served = output.size();
  o.total_queries = golden.size();
  if (status.kind == ExitStatus::Kind::Running) {
    o.kind = TrialOutcome::Kind::Hang;
    o.time_to_crash = timeout;
    return o;
  }
  if (status.kind == ExitStatus::Kind::Signaled ||
      (status.kind == ExitStatus::Kind::Exited && status.code != 0)) {
    o.kind = TrialOutcome::Kind::Crash;
    if (status.kind == ExitStatus::Kind::Signaled)
      o.signal = status.code;
    else
      o.exit_code = status.code;
    o.time_to_crash = std::min(elapsed, timeout);
    return o;
  }
  o.mismatched = compare_output(output, golden, cmp);
  o.kind = o.mismatched > 0 ? TrialOutcome::Kind::Incorrect
                            : TrialOutcome::Kind::Masked;
  return o;
}

// ---------------------------------------------------------------- trial

namespace {

std::string trigger_to_string(const InjectTrigger& t) {
  switch (t.kind) {
    case InjectTrigger::Kind::AtStart: return "at-start";
    case InjectTrigger::Kind::AfterQueries:
      return "after-queries:" + std::to_string(t.after_queries);
    case InjectTrigger::Kind::AfterDelay:
      return "after-ms:" + std::to_string(t.delay.count());
  }
  return "at-start";
}

InjectTrigger trigger_from_string(const std::string& s) {
  if (s == "at-start") return InjectTrigger::at_start();
  if (s.rfind("after-queries:", 0) == 0)
    return InjectTrigger::after_queries_done(
        std::stoull(s.substr(sizeof("after-queries:") - 1)));
  if (s.rfind("after-ms:", 0) == 0) {
    InjectTrigger t;
    t.kind = InjectTrigger::Kind::AfterDelay;
    t.delay = std::chrono::milliseconds(
        std::stoll(s.substr(sizeof("after-ms:") - 1)));
    return t;
  }
  throw ConfigError("trigger: unrecognized spec '" + s + "'");
}

void fire_injection(BackendSession& session, const ErrorSpec& spec) {
  if (spec.mode == ErrorMode::Soft)
    session.inject_soft(spec);
  else
    session.inject_hard(spec);
}

TrialOutcome run_trial_arena(const TrialConfig& config,
                             const std::vector<std::string>& golden) {
  for (const auto& e : config.errors)
    if (e.inject_at.kind == InjectTrigger::Kind::AfterDelay)
      throw ConfigError(
          "arena backend: wall-clock triggers are nondeterministic; use "
          "at-start or after-queries");

  auto w = make_workload(config.spec);
  auto arena = w->make_arena();
  w->build(*arena);
  ArenaSession session(arena);
  arena->reset_traffic();

  std::vector<bool> fired(config.errors.size(), false);
  auto fire_due = [&](std::uint64_t served) {
    for (std::size_t i = 0; i < config.errors.size(); ++i) {
      if (fired[i]) continue;
      const InjectTrigger& t = config.errors[i].inject_at;
      bool due = (t.kind == InjectTrigger::Kind::AtStart) ||
                 (t.kind == InjectTrigger::Kind::AfterQueries &&
                  served >= t.after_queries);
      if (due) {
        fire_injection(session, config.errors[i]);
        fired[i] = true;
      }
    }
  };

  auto t0 = Clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                                 t0);
  };

  std::vector<std::string> responses;
  const std::uint64_t total = w->query_count();
  responses.reserve(total);
  fire_due(0);
  TrialOutcome o;
  try {
    for (std::uint64_t q = 0; q < total; ++q) {
      if (elapsed() >= config.timeout) {
        o = classify_outcome({ExitStatus::Kind::Running, 0}, responses, golden,
                             elapsed(), config.timeout, config.comparator);
        o.receipts = session.receipts();
        return o;
      }
      responses.push_back(w->serve(*arena, w->request(q)));
      fire_due(q + 1);
    }
  } catch (const ArenaAccessViolation&) {
    o = classify_outcome({ExitStatus::Kind::Signaled, SIGSEGV}, responses,
                         golden, elapsed(), config.timeout, config.comparator);
    o.receipts = session.receipts();
    return o;
  } catch (const StepBudgetExceeded&) {
    o = classify_outcome({ExitStatus::Kind::Running, 0}, responses, golden,
                         config.timeout, config.timeout, config.comparator);
    o.receipts = session.receipts();
    return o;
  }
  o = classify_outcome({ExitStatus::Kind::Exited, 0}, responses, golden,
                       elapsed(), config.timeout, config.comparator);
  o.receipts = session.receipts();
  return o;
}

// Reads one frame from fd with a deadline, pumping session events so pins
// re-assert and termination is noticed. Returns nullopt when the target
// terminated or the deadline passed (the caller distinguishes via session
// state and *terminal).
std::optional<std::string> read_frame_deadline(
    DebuggerSession& session, int fd, FrameReader& reader,
    Clock::time_point deadline, std::optional<Event>* terminal) {
  for (;;) {
    if (auto f = reader.next()) return f;
    Event e = session.watch_events(std::chrono::milliseconds(1));
    if (e.kind == Event::Kind::Exited || e.kind == Event::Kind::Signaled) {
      // Drain anything the target flushed before dying.
      for (;;) {
        char buf[4096];
        ssize_t r = read(fd, buf, sizeof buf);
        if (r <= 0) break;
        reader.feed(std::string_view(buf, std::size_t(r)));
      }
      if (auto f = reader.next()) {
        *terminal = e;  // remember; caller keeps collecting frames
        return f;
      }
      *terminal = e;
      return std::nullopt;
    }
    struct pollfd p = {fd, POLLIN, 0};
    int pr = poll(&p, 1, 5);
    if (pr == 1 && (p.revents & (POLLIN | POLLHUP))) {
      char buf[4096];
      ssize_t r = read(fd, buf, sizeof buf);
      if (r > 0) reader.feed(std::string_view(buf, std::size_t(r)));
    }
    if (Clock::now() >= deadline) return std::nullopt;
  }
}

InjectionTarget retarget(const MemoryRegionMap& sampled,
                         const MemoryRegionMap& live,
                         const InjectionTarget& t) {
  if (sampled.regions.empty()) return t;  // already relative to live map
  if (t.region_index >= sampled.regions.size())
    throw AccessError("trial: sampled target region out of range");
  std::uint64_t addr = sampled.regions[t.region_index].start + t.offset;
  for (std::uint32_t i = 0; i < live.regions.size(); ++i) {
    const auto& r = live.regions[i];
    if (r.contains(addr)) return {i, addr - r.start, t.bit};
  }
  throw AccessError("trial: sampled address not mapped in target");
}

TrialOutcome run_trial_debugger(const TrialConfig& config,
                                const std::vector<std::string>& golden,
                                const MemoryRegionMap& sampled_map) {
  if (config.target_argv.empty())
    throw ConfigError("debugger backend: no target command configured");

  auto w = make_workload(config.spec);  // client side only
  DebuggerSession::Options opts;
  opts.stdio_pipes = true;
  auto session = DebuggerSession::spawn(config.target_argv, opts);
  session->resume();

  auto t0 = Clock::now();
  auto deadline = t0 + config.timeout;
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                                 t0);
  };

  FrameReader reader;
  std::optional<Event> terminal;
  auto ready = read_frame_deadline(*session, session->stdout_fd(), reader,
                                   deadline, &terminal);
  if (!ready || ready->rfind("READY", 0) != 0) {
    if (terminal)
      throw SessionError("debugger trial: target died before READY");
    throw SessionError("debugger trial: no READY handshake");
  }
  session->capture_region_map();

  std::vector<ErrorSpec> errors = config.errors;
  for (auto& e : errors)
    e.target = retarget(sampled_map, session->region_map(), e.target);

  std::vector<bool> fired(errors.size(), false);
  auto fire_due = [&](std::uint64_t served) {
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (fired[i]) continue;
      const InjectTrigger& t = errors[i].inject_at;
      bool due = (t.kind == InjectTrigger::Kind::AtStart) ||
                 (t.kind == InjectTrigger::Kind::AfterQueries &&
                  served >= t.after_queries) ||
                 (t.kind == InjectTrigger::Kind::AfterDelay &&
                  elapsed() >= t.delay);
      if (due) {
        fire_injection(*session, errors[i]);
        fired[i] = true;
      }
    }
  };

  std::vector<std::string> responses;
  const std::uint64_t total = w->query_count();
  fire_due(0);
  for (std::uint64_t q = 0; q < total; ++q) {
    try {
      write_frame_fd(session->stdin_fd(), w->request(q));
    } catch (const Error&) {
      // Broken pipe: the target is gone; find out how.
      (void)session->watch_events(std::chrono::milliseconds(200));
      break;
    }
    auto resp = read_frame_deadline(*session, session->stdout_fd(), reader,
                                    deadline, &terminal);
    if (!resp) break;
    responses.push_back(*resp);
    fire_due(q + 1);
  }

  TrialOutcome o;
  if (responses.size() == total) {
    o = classify_outcome({ExitStatus::Kind::Exited, 0}, responses, golden,
                         elapsed(), config.timeout, config.comparator);
  } else if (terminal) {
    ExitStatus st{terminal->kind == Event::Kind::Exited
                      ? ExitStatus::Kind::Exited
                      : ExitStatus::Kind::Signaled,
                  terminal->code};
    o = classify_outcome(st, responses, golden, elapsed(), config.timeout,
                         config.comparator);
  } else {
    // Pump once more in case termination raced the last read.
    Event e = session->watch_events(std::chrono::milliseconds(50));
    if (e.kind == Event::Kind::Exited || e.kind == Event::Kind::Signaled) {
      ExitStatus st{e.kind == Event::Kind::Exited ? ExitStatus::Kind::Exited
                                                  : ExitStatus::Kind::Signaled,
                    e.code};
      o = classify_outcome(st, responses, golden, elapsed(), config.timeout,
                           config.comparator);
    } else {
      o = classify_outcome({ExitStatus::Kind::Running, 0}, responses, golden,
                           elapsed(), config.timeout, config.comparator);
    }
  }
  o.receipts = session->receipts();
  session->terminate();
  return o;
}

}  // namespace

TrialOutcome run_trial(const TrialConfig& config,
                       const std::vector<std::string>& golden) {
  return run_trial_with_map(config, golden, MemoryRegionMap{});
}

TrialOutcome run_trial_with_map(const TrialConfig& config,
                                const std::vector<std::string>& golden,
                                const MemoryRegionMap& sampled_map) {
  try {
    if (config.backend == "arena") return run_trial_arena(config, golden);
    if (config.backend == "debugger")
      return run_trial_debugger(config, golden, sampled_map);
    throw ConfigError("unknown backend '" + config.backend + "'");
  } catch (const Error& e) {
    TrialOutcome o;
    o.kind = TrialOutcome::Kind::InfraInvalid;
    o.infra_reason = e.what();
    o.total_queries = golden.size();
    return o;
  } catch (const std::exception& e) {
    TrialOutcome o;
    o.kind = TrialOutcome::Kind::InfraInvalid;
    o.infra_reason = std::string("unexpected: ") + e.what();
    o.total_queries = golden.size();
    return o;
  }
}

// ---------------------------------------------------------------- plan

SamplingPlan plan_from_toml(const TomlTable& t) {
  SamplingPlan p;
  WorkloadSpec s;
  s.id = t.get_string("workload.id");
  s.dataset_seed = std::uint64_t(t.get_int_or("workload.dataset_seed", 1));
  s.query_seed = std::uint64_t(t.get_int_or("workload.query_seed", 2));
  s.queries = std::uint64_t(t.get_int_or("workload.queries", 0));
  s.kv_keys = std::uint64_t(t.get_int_or("workload.kv_keys", 512));
  s.kv_value_len = std::uint64_t(t.get_int_or("workload.kv_value_len", 128));
  s.search_docs = std::uint64_t(t.get_int_or("workload.search_docs", 128));
  s.graph_nodes = std::uint64_t(t.get_int_or("workload.graph_nodes", 256));
  p.spec = s;

  p.backend = t.get_string_or("backend.kind", "arena");
  if (p.backend != "arena" && p.backend != "debugger")
    throw ConfigError("plan: backend.kind must be arena or debugger");
  if (t.has("backend.argv")) p.target_argv = t.get_string_array("backend.argv");

  if (t.has("sampling.region")) {
    auto k = region_kind_from_name(t.get_string("sampling.region"));
    if (!k)
      throw ConfigError("plan: sampling.region is not a region kind name");
    p.region_filter = *k;
  }
  if (t.has("sampling.label")) p.label_filter = t.get_string("sampling.label");
  p.exhaustive = t.get_bool_or("sampling.exhaustive", false);
  p.targets = std::uint64_t(t.get_int_or("sampling.targets", 0));
  if (!p.exhaustive && p.targets == 0)
    throw ConfigError("plan: sampling.targets must be positive (or set "
                      "sampling.exhaustive)");
  p.seed = std::uint64_t(t.get_int_or("sampling.seed", 1));
  if (t.has("sampling.modes")) {
    p.modes.clear();
    for (const auto& m : t.get_string_array("sampling.modes")) {
      auto mode = error_mode_from_name(m);
      if (!mode) throw ConfigError("plan: unknown error mode '" + m + "'");
      p.modes.push_back(*mode);
    }
  }
  if (p.modes.empty()) throw ConfigError("plan: sampling.modes is empty");
  p.trigger =
      trigger_from_string(t.get_string_or("sampling.trigger", "after-queries:1"));
  p.reassert_interval = std::chrono::milliseconds(
      t.get_int_or("sampling.reassert_interval_ms", 1));

  p.trial_timeout =
      std::chrono::milliseconds(t.get_int_or("limits.trial_timeout_ms", 60000));
  if (p.trial_timeout.count() <= 0)
    throw ConfigError("plan: limits.trial_timeout_ms must be positive");
  p.max_infra_rate = t.get_double_or("limits.max_infra_rate", 0.05);
  p.comparator = Comparator::from_string(
      t.get_string_or("limits.comparator", "per-query-exact"));
  return p;
}

SamplingPlan plan_from_file(const std::string& path) {
  return plan_from_toml(TomlTable::parse_file(path));
}

std::string plan_canonical(const SamplingPlan& p) {
  ordered_json j;
  j["workload"] = json::parse(workload_spec_to_json(p.spec));
  j["backend"] = p.backend;
  j["argv"] = p.target_argv;
  j["region"] = p.region_filter ? region_kind_name(*p.region_filter) : "";
  j["label"] = p.label_filter ? *p.label_filter : "";
  j["exhaustive"] = p.exhaustive;
  j["targets"] = p.targets;
  j["modes"] = [&] {
    std::vector<std::string> v;
    for (auto m : p.modes) v.push_back(error_mode_name(m));
    return v;
  }();
  j["seed"] = p.seed;
  j["trigger"] = trigger_to_string(p.trigger);
  j["reassert_interval_ms"] = p.reassert_interval.count();
  j["trial_timeout_ms"] = p.trial_timeout.count();
  j["max_infra_rate"] = p.max_infra_rate;
  j["comparator"] = p.comparator.to_string();
  return j.dump();
}

std::string plan_hash(const SamplingPlan& p) {
  return Sha256::hex_of(plan_canonical(p));
}

// ---------------------------------------------------------------- log I/O

namespace {

ordered_json receipt_to_json(const InjectionReceipt& r) {
  ordered_json j;
  j["action"] = receipt_action_name(r.action);
  j["mode"] = error_mode_name(r.mode);
  j["region_index"] = r.target.region_index;
  j["offset"] = r.target.offset;
  j["bit"] = r.target.bit;
  j["pre"] = r.pre_byte;
  j["post"] = r.post_byte;
  j["degraded"] = r.degraded;
  j["unix_ms"] = r.unix_ms;
  return j;
}

InjectionReceipt receipt_from_json(const json& j) {
  InjectionReceipt r;
  std::string action = j.value("action", "flip");
  if (action == "pin")
    r.action = InjectionReceipt::Action::Pin;
  else if (action == "reassert")
    r.action = InjectionReceipt::Action::Reassert;
  r.mode = error_mode_from_name(j.value("mode", "soft"))
               .value_or(ErrorMode::Soft);
  r.target.region_index = j.value("region_index", 0u);
  r.target.offset = j.value("offset", std::uint64_t{0});
  r.target.bit = std::uint8_t(j.value("bit", 0));
  r.pre_byte = std::uint8_t(j.value("pre", 0));
  r.post_byte = std::uint8_t(j.value("post", 0));
  r.degraded = j.value("degraded", false);
  r.unix_ms = j.value("unix_ms", std::int64_t{0});
  return r;
}

ordered_json outcome_to_json(const TrialOutcome& o) {
  ordered_json j;
  j["kind"] = trial_outcome_name(o.kind);
  j["signal"] = o.signal;
  j["exit_code"] = o.exit_code;
  j["time_to_crash_ms"] = o.time_to_crash.count();
  j["queries_served"] = o.queries_served;
  j["mismatched"] = o.mismatched;
  j["total_queries"] = o.total_queries;
  j["infra_reason"] = o.infra_reason;
  ordered_json rs = ordered_json::array();
  for (const auto& r : o.receipts) rs.push_back(receipt_to_json(r));
  j["receipts"] = rs;
  return j;
}

TrialOutcome outcome_from_json(const json& j) {
  TrialOutcome o;
  o.kind = trial_outcome_from_name(j.value("kind", "masked"))
               .value_or(TrialOutcome::Kind::Masked);
  o.signal = j.value("signal", 0);
  o.exit_code = j.value("exit_code", 0);
  o.time_to_crash = std::chrono::milliseconds(
      j.value("time_to_crash_ms", std::int64_t{0}));
  o.queries_served = j.value("queries_served", std::uint64_t{0});
  o.mismatched = j.value("mismatched", std::uint64_t{0});
  o.total_queries = j.value("total_queries", std::uint64_t{0});
  o.infra_reason = j.value("infra_reason", "");
  if (j.contains("receipts"))
    for (const auto& r : j["receipts"]) o.receipts.push_back(receipt_from_json(r));
  return o;
}

void bump(CampaignCounts& c, TrialOutcome::Kind k) {
  switch (k) {
    case TrialOutcome::Kind::Crash: ++c.crash; break;
    case TrialOutcome::Kind::Incorrect: ++c.incorrect; break;
    case TrialOutcome::Kind::Masked: ++c.masked; break;
    case TrialOutcome::Kind::Hang: ++c.hang; break;
    case TrialOutcome::Kind::InfraInvalid: ++c.infra_invalid; break;
  }
}

struct ParsedLog {
  ordered_json meta;
  std::vector<LogTrialRecord> trials;
  bool has_summary = false;
  CampaignCounts counts;
  bool torn = false;           // hard-killed writer left a partial last line
  std::uint64_t torn_at = 0;   // byte offset where the partial line starts
};

// Reads a log, enforcing gap-free strictly increasing seq. A hard-killed
// writer may leave a torn final line; that (and only that) is tolerated.
ParsedLog parse_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("campaign log: cannot open " + path);
  ParsedLog out;
  std::string line;
  std::uint64_t lineno = 0;
  std::uint64_t expect_seq = 0;
  for (;;) {
    const auto line_start = in.tellg();
    if (!std::getline(in, line)) break;
    ++lineno;
    if (out.torn)
      throw IntegrityError("campaign log: corrupt record mid-file at line " +
                           std::to_string(lineno - 1));
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      out.torn = true;  // only acceptable as the very last line
      out.torn_at = std::uint64_t(line_start);
      continue;
    }
    std::uint64_t seq = j.value("seq", std::uint64_t{0});
    std::string kind = j.value("kind", "");
    if (seq != expect_seq)
      throw IntegrityError("campaign log: sequence gap at line " +
                           std::to_string(lineno) + " (expected seq " +
                           std::to_string(expect_seq) + ")");
    ++expect_seq;
    if (kind == "meta") {
      if (seq != 0) throw IntegrityError("campaign log: meta record not first");
      out.meta = ordered_json(j);
    } else if (kind == "trial") {
      LogTrialRecord r;
      r.seq = seq;
      const json& tj = j.at("target");
      r.target.region_index = tj.value("region_index", 0u);
      r.target.offset = tj.value("offset", std::uint64_t{0});
      r.target.bit = std::uint8_t(tj.value("bit", 0));
      r.region_label = tj.value("label", "");
      r.region_kind = region_kind_from_name(tj.value("region_kind", "other"))
                          .value_or(RegionKind::Other);
      r.mode = error_mode_from_name(j.value("mode", "soft"))
                   .value_or(ErrorMode::Soft);
      r.outcome = outcome_from_json(j.at("outcome"));
      r.ts_unix_ms = j.value("ts_unix_ms", std::int64_t{0});
      bump(out.counts, r.outcome.kind);
      out.trials.push_back(std::move(r));
    } else if (kind == "summary") {
      out.has_summary = true;
    } else {
      throw IntegrityError("campaign log: unknown record kind at line " +
                           std::to_string(lineno));
    }
  }
  if (out.meta.is_null())
    throw IntegrityError("campaign log: missing meta record");
  return out;
}

}  // namespace

CampaignLogView read_campaign_log(const std::string& path) {
  ParsedLog p = parse_log_file(path);
  CampaignLogView v;
  v.plan_hash = p.meta.value("plan_hash", "");
  v.backend = p.meta.value("backend", "");
  v.spec = workload_spec_from_json(p.meta.value("workload", json::object()).dump());
  v.golden_sha256 = p.meta.value("golden_sha256", "");
  v.dataset_sha256 = p.meta.value("dataset_sha256", "");
  v.planned_trials = p.meta.value("planned_trials", std::uint64_t{0});
  v.trials = std::move(p.trials);
  v.has_summary = p.has_summary;
  v.counts = p.counts;
  return v;
}

std::string campaign_log_canonical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("campaign log: cannot open " + path);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn tail
    j.erase("start_unix_ms");
    j.erase("finished_unix_ms");
    j.erase("ts_unix_ms");
    j.erase("wall_ms");
    if (j.contains("outcome")) {
      j["outcome"].erase("time_to_crash_ms");
      if (j["outcome"].contains("receipts"))
        for (auto& r : j["outcome"]["receipts"]) r.erase("unix_ms");
    }
    out << j.dump() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- campaign

namespace {

std::vector<InjectionTarget> enumerate_targets(
    const MemoryRegionMap& map, std::optional<RegionKind> kind,
    const std::optional<std::string>& label) {
  std::vector<InjectionTarget> out;
  std::uint64_t positions = 0;
  for (std::uint32_t i = 0; i < map.regions.size(); ++i) {
    const auto& r = map.regions[i];
    if (kind && r.kind != *kind) continue;
    if (label && r.label != *label) continue;
    positions += r.length * 8;
    if (positions > 10'000'000)
      throw ConfigError(
          "plan: exhaustive enumeration exceeds 10M bit positions; narrow "
          "the filters");
    for (std::uint64_t off = 0; off < r.length; ++off)
      for (std::uint8_t bit = 0; bit < 8; ++bit)
        out.push_back({i, off, bit});
  }
  if (out.empty())
    throw EmptyDomainError("plan: no region matches the sampling filters");
  return out;
}

struct TrialUnit {
  ErrorMode mode;
  InjectionTarget target;
};

}  // namespace

CampaignResult run_campaign(const SamplingPlan& plan, const RunOptions& opts,
                            const std::string& log_path) {
  if (opts.parallelism < 1)
    throw ConfigError("campaign: parallelism must be >= 1");
  if (plan.backend == "arena" &&
      plan.trigger.kind == InjectTrigger::Kind::AfterDelay)
    throw ConfigError(
        "plan: arena backend cannot honor wall-clock triggers; use at-start "
        "or after-queries");

  const std::string hash = plan_hash(plan);

  // Golden first: trials are meaningless without the recorded expectation.
  GoldenResult golden = golden_run(plan.spec);

  // Sampling domain. The arena pseudo map is identical across trials; the
  // debugger domain comes from a scout process (layout is stable because
  // address randomization is disabled for spawned targets).
  MemoryRegionMap domain;
  if (plan.backend == "arena") {
    auto w = make_workload(plan.spec);
    auto arena = w->make_arena();
    w->build(*arena);
    domain = arena_pseudo_region_map(*arena);
  } else {
    if (plan.target_argv.empty())
      throw ConfigError("plan: debugger backend needs backend.argv");
    DebuggerSession::Options dopts;
    dopts.stdio_pipes = true;
    auto scout = DebuggerSession::spawn(plan.target_argv, dopts);
    scout->resume();
    FrameReader reader;
    std::optional<Event> terminal;
    auto ready = read_frame_deadline(*scout, scout->stdout_fd(), reader,
                                     Clock::now() + plan.trial_timeout,
                                     &terminal);
    if (!ready || ready->rfind("READY", 0) != 0)
      throw SetupError("campaign: scout target produced no READY handshake");
    scout->capture_region_map();
    domain = scout->region_map();
    scout->terminate();
  }

  std::vector<InjectionTarget> targets =
      plan.exhaustive
          ? enumerate_targets(domain, plan.region_filter, plan.label_filter)
          : sample_addresses(domain, plan.region_filter, plan.targets,
                             plan.seed, plan.label_filter);

  std::vector<TrialUnit> units;
  units.reserve(targets.size() * plan.modes.size());
  for (ErrorMode m : plan.modes)
    for (const auto& t : targets) units.push_back({m, t});

  // Resume bookkeeping.
  std::uint64_t resume_from = 0;
  bool have_meta = false;
  bool have_summary = false;
  CampaignCounts counts;
  {
    std::ifstream probe(log_path);
    if (probe && probe.peek() != std::ifstream::traits_type::eof()) {
      ParsedLog prior = parse_log_file(log_path);
      std::string prior_hash = prior.meta.value("plan_hash", "");
      if (prior_hash != hash)
        throw IntegrityError(
            "campaign log: plan hash mismatch; refusing to resume (log " +
            prior_hash.substr(0, 12) + "…, plan " + hash.substr(0, 12) + "…)");
      if (prior.meta.value("golden_sha256", "") != golden.response_sha256_hex)
        throw IntegrityError(
            "campaign log: golden output changed since the log was started");
      resume_from = prior.trials.size();
      counts = prior.counts;
      have_meta = true;
      have_summary = prior.has_summary;
      // A hard-killed writer can leave a partial final line; cut it so the
      // appended records start on a line boundary.
      if (prior.torn && ::truncate(log_path.c_str(), off_t(prior.torn_at)) != 0)
        throw SetupError("campaign: cannot truncate torn log tail");
    }
  }

  std::ofstream out(log_path, std::ios::app);
  if (!out) throw SetupError("campaign: cannot open log " + log_path);

  if (!have_meta) {
    ordered_json meta;
    meta["schema"] = "hrmlab-campaign-v1";
    meta["seq"] = 0;
    meta["kind"] = "meta";
    meta["plan_hash"] = hash;
    meta["plan"] = ordered_json::parse(plan_canonical(plan));
    meta["backend"] = plan.backend;
    meta["workload"] = ordered_json::parse(workload_spec_to_json(plan.spec));
    meta["workload_version"] = make_workload(plan.spec)->version();
    meta["golden_sha256"] = golden.response_sha256_hex;
    meta["dataset_sha256"] = golden.dataset_sha256_hex;
    meta["planned_trials"] = units.size();
    ordered_json regions = ordered_json::array();
    for (const auto& r : domain.regions) {
      ordered_json rj;
      rj["start"] = r.start;
      rj["length"] = r.length;
      rj["kind"] = region_kind_name(r.kind);
      rj["label"] = r.label;
      regions.push_back(rj);
    }
    meta["region_map"] = regions;
    meta["start_unix_ms"] = unix_now_ms();
    out << meta.dump() << '\n';
    out.flush();
  }

  const std::uint64_t total_units = units.size();
  const std::uint64_t allowed =
      opts.max_new_trials == 0
          ? total_units
          : std::min(total_units, resume_from + opts.max_new_trials);

  std::mutex mu;
  std::map<std::uint64_t, std::string> ready_lines;  // seq → line
  std::uint64_t next_write = resume_from;
  std::atomic<std::uint64_t> next_claim{resume_from};

  auto worker = [&] {
    for (;;) {
      std::uint64_t i = next_claim.fetch_add(1);
      if (i >= allowed) return;
      const TrialUnit& u = units[i];

      TrialConfig cfg;
      cfg.spec = plan.spec;
      cfg.backend = plan.backend;
      cfg.target_argv = plan.target_argv;
      cfg.timeout = plan.trial_timeout;
      cfg.comparator = plan.comparator;
      cfg.seed = plan.seed;
      ErrorSpec e;
      e.target = u.target;
      e.mode = u.mode;
      e.inject_at = plan.trigger;
      e.reassert_interval = plan.reassert_interval;
      cfg.errors.push_back(e);

      TrialOutcome o =
          run_trial_with_map(cfg, golden.responses,
                             plan.backend == "debugger" ? domain
                                                        : MemoryRegionMap{});

      const MemoryRegion& reg = domain.regions[u.target.region_index];
      ordered_json rec;
      rec["seq"] = i + 1;
      rec["kind"] = "trial";
      rec["mode"] = error_mode_name(u.mode);
      ordered_json tj;
      tj["region_index"] = u.target.region_index;
      tj["label"] = reg.label;
      tj["region_kind"] = region_kind_name(reg.kind);
      tj["offset"] = u.target.offset;
      tj["bit"] = u.target.bit;
      rec["target"] = tj;
      rec["trigger"] = trigger_to_string(plan.trigger);
      rec["outcome"] = outcome_to_json(o);
      rec["ts_unix_ms"] = unix_now_ms();

      std::lock_guard<std::mutex> lock(mu);
      bump(counts, o.kind);
      ready_lines[i] = rec.dump();
      while (!ready_lines.empty() && ready_lines.begin()->first == next_write) {
        out << ready_lines.begin()->second << '\n';
        out.flush();
        ready_lines.erase(ready_lines.begin());
        ++next_write;
      }
    }
  };

  std::vector<std::thread> pool;
  for (int k = 0; k < opts.parallelism; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  if (next_write == total_units && !have_summary) {
    ordered_json sum;
    sum["seq"] = total_units + 1;
    sum["kind"] = "summary";
    ordered_json cj;
    cj["crash"] = counts.crash;
    cj["incorrect"] = counts.incorrect;
    cj["masked"] = counts.masked;
    cj["hang"] = counts.hang;
    cj["infra_invalid"] = counts.infra_invalid;
    sum["counts"] = cj;
    sum["infra_rate"] =
        counts.total() ? double(counts.infra_invalid) / double(counts.total())
                       : 0.0;
    sum["finished_unix_ms"] = unix_now_ms();
    out << sum.dump() << '\n';
    out.flush();
  }

  CampaignResult res;
  res.log_path = log_path;
  res.counts = counts;
  res.planned_trials = total_units;
  res.complete = next_write == total_units;
  res.infra_rate = counts.total()
                       ? double(counts.infra_invalid) / double(counts.total())
                       : 0.0;
  return res;
}

}  // namespace hrmlab
