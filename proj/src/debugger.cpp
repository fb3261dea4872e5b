#include "hrmlab/debugger.hpp"

#include <cerrno>
#include <cstddef>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/personality.h>
#include <sys/ptrace.h>
#include <sys/user.h>
#include <sys/wait.h>
#include <unistd.h>

#include "hrmlab/errors.hpp"

namespace hrmlab {

namespace {

std::string errno_text(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

long xptrace(__ptrace_request req, int pid, void* addr, void* data,
             const char* what) {
  errno = 0;
  long r = ptrace(req, pid, addr, data);
  if (r == -1 && errno != 0) throw SessionError(errno_text(what));
  return r;
}

constexpr std::size_t dr_offset(int i) {
  return offsetof(struct user, u_debugreg) + std::size_t(i) * sizeof(long);
}

}  // namespace

std::unique_ptr<DebuggerSession> DebuggerSession::spawn(
    const std::vector<std::string>& argv, const Options& opts) {
  if (argv.empty()) throw LaunchError("spawn: empty command line");

  int in_pipe[2] = {-1, -1}, out_pipe[2] = {-1, -1}, err_pipe[2] = {-1, -1};
  if (pipe2(err_pipe, O_CLOEXEC) != 0)
    throw LaunchError(errno_text("spawn: pipe"));
  if (opts.stdio_pipes && (pipe(in_pipe) != 0 || pipe(out_pipe) != 0))
    throw LaunchError(errno_text("spawn: pipe"));

  pid_t pid = fork();
  if (pid < 0) throw LaunchError(errno_text("spawn: fork"));

  if (pid == 0) {
    personality(ADDR_NO_RANDOMIZE);
    if (opts.stdio_pipes) {
      dup2(in_pipe[0], 0);
      dup2(out_pipe[1], 1);
    }
    // Drop every inherited descriptor above stdio. Concurrent sessions fork
    // while other pipes are open; a leaked write end would hold a sibling's
    // stdout open forever. The exec-failure pipe survives via CLOEXEC until
    // exec, which is exactly its job, so skip it here.
    for (int fd = 3; fd < 1024; ++fd)
      if (fd != err_pipe[1]) close(fd);
    for (const auto& [k, v] : opts.env) setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    if (ptrace(PTRACE_TRACEME, 0, nullptr, nullptr) != 0) _exit(126);
    execvp(cargv[0], cargv.data());
    int e = errno;  // exec failed; report it through the cloexec pipe
    ssize_t ignored = write(err_pipe[1], &e, sizeof e);
    (void)ignored;
    _exit(127);
  }

  close(err_pipe[1]);
  if (opts.stdio_pipes) {
    close(in_pipe[0]);
    close(out_pipe[1]);
  }

  auto s = std::unique_ptr<DebuggerSession>(new DebuggerSession());
  s->pid_ = pid;
  s->allow_watchpoints_ = opts.allow_watchpoints;
  if (opts.stdio_pipes) {
    s->child_stdin_ = in_pipe[1];
    s->child_stdout_ = out_pipe[0];
    fcntl(s->child_stdin_, F_SETFD, FD_CLOEXEC);
    fcntl(s->child_stdout_, F_SETFD, FD_CLOEXEC);
  }

  int status = 0;
  if (waitpid(pid, &status, 0) < 0) throw LaunchError(errno_text("spawn: wait"));
  if (!WIFSTOPPED(status)) {
    int e = 0;
    std::string detail = "target exited before entry";
    if (read(err_pipe[0], &e, sizeof e) == sizeof e)
      detail = std::string("exec failed: ") + std::strerror(e);
    close(err_pipe[0]);
    throw LaunchError("spawn " + argv[0] + ": " + detail);
  }
  close(err_pipe[0]);

  ptrace(PTRACE_SETOPTIONS, pid, nullptr, (void*)PTRACE_O_EXITKILL);
  s->live_ = true;
  s->stopped_ = true;
  s->capture_region_map();
  return s;
}

DebuggerSession::~DebuggerSession() { terminate(); }

void DebuggerSession::terminate() {
  if (pid_ > 0 && live_) {
    kill(pid_, SIGKILL);
    int status = 0;
    while (waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    live_ = false;
    stopped_ = false;
  } else if (pid_ > 0) {
    // Already saw termination via waitpid; nothing left to reap.
  }
  if (child_stdin_ >= 0) {
    close(child_stdin_);
    child_stdin_ = -1;
  }
  if (child_stdout_ >= 0) {
    close(child_stdout_);
    child_stdout_ = -1;
  }
  pid_ = -1;
}

void DebuggerSession::close_stdin() {
  if (child_stdin_ >= 0) {
    close(child_stdin_);
    child_stdin_ = -1;
  }
}

void DebuggerSession::require_live() const {
  if (!live_) throw SessionError("debugger: session is terminated");
}

void DebuggerSession::capture_region_map() {
  require_live();
  bool was_running = !stopped_;
  if (was_running) interrupt();
  map_ = capture_process_region_map(pid_);
  if (was_running && live_) resume();
}

std::uint64_t DebuggerSession::resolve(const InjectionTarget& t,
                                       bool for_write) const {
  if (t.region_index >= map_.regions.size())
    throw AccessError("debugger: target region index out of range");
  const MemoryRegion& r = map_.regions[t.region_index];
  if (t.offset >= r.length || t.bit > 7)
    throw AccessError("debugger: target outside region bounds");
  if (for_write && !r.write)
    throw AccessError("debugger: target region is not writable");
  return r.start + t.offset;
}

std::uint8_t DebuggerSession::peek_byte(std::uint64_t addr) {
  std::uint64_t word_addr = addr & ~7ull;
  errno = 0;
  long word = ptrace(PTRACE_PEEKDATA, pid_, (void*)word_addr, nullptr);
  if (word == -1 && errno != 0)
    throw AccessError(errno_text("debugger: unreadable address"));
  return std::uint8_t(std::uint64_t(word) >> ((addr - word_addr) * 8));
}

void DebuggerSession::poke_byte(std::uint64_t addr, std::uint8_t value) {
  std::uint64_t word_addr = addr & ~7ull;
  errno = 0;
  long word = ptrace(PTRACE_PEEKDATA, pid_, (void*)word_addr, nullptr);
  if (word == -1 && errno != 0)
    throw AccessError(errno_text("debugger: unreadable address"));
  unsigned shift = unsigned(addr - word_addr) * 8;
  std::uint64_t w = std::uint64_t(word);
  w = (w & ~(0xffull << shift)) | (std::uint64_t(value) << shift);
  errno = 0;
  if (ptrace(PTRACE_POKEDATA, pid_, (void*)word_addr, (void*)w) != 0)
    throw AccessError(errno_text("debugger: unwritable address"));
}

std::uint8_t DebuggerSession::read_byte(const InjectionTarget& t) {
  require_live();
  std::uint64_t addr = resolve(t, false);
  bool was_running = !stopped_;
  if (was_running) interrupt();
  std::uint8_t b = peek_byte(addr);
  if (was_running && live_) resume();
  return b;
}

void DebuggerSession::write_byte(const InjectionTarget& t, std::uint8_t value) {
  require_live();
  std::uint64_t addr = resolve(t, true);
  bool was_running = !stopped_;
  if (was_running) interrupt();
  poke_byte(addr, value);
  if (was_running && live_) resume();
}

InjectionReceipt DebuggerSession::inject_soft(const ErrorSpec& spec) {
  require_live();
  std::uint64_t addr = resolve(spec.target, false);
  bool was_running = !stopped_;
  if (was_running) interrupt();
  InjectionReceipt r;
  r.action = InjectionReceipt::Action::Flip;
  r.target = spec.target;
  r.mode = ErrorMode::Soft;
  r.pre_byte = peek_byte(addr);
  r.post_byte = std::uint8_t(r.pre_byte ^ (1u << spec.target.bit));
  poke_byte(addr, r.post_byte);
  r.unix_ms = unix_now_ms();
  receipts_.push_back(r);
  if (was_running && live_) resume();
  return r;
}

bool DebuggerSession::arm_watchpoint(std::uint64_t addr) {
  if (!allow_watchpoints_) return false;
  int slot = -1;
  for (int i = 0; i < 4; ++i) {
    if (watch_used_[i] && watch_slots_[i] == addr) return true;
    if (!watch_used_[i] && slot < 0) slot = i;
  }
  if (slot < 0) return false;
  errno = 0;
  if (ptrace(PTRACE_POKEUSER, pid_, (void*)dr_offset(slot), (void*)addr) != 0)
    return false;
  errno = 0;
  long dr7 = ptrace(PTRACE_PEEKUSER, pid_, (void*)dr_offset(7), nullptr);
  if (dr7 == -1 && errno != 0) return false;
  // Local enable + write-only + 1-byte length for the slot.
  std::uint64_t v = std::uint64_t(dr7);
  v |= 1ull << (2 * slot);
  v &= ~(0xfull << (16 + 4 * slot));
  v |= 0x1ull << (16 + 4 * slot);
  if (ptrace(PTRACE_POKEUSER, pid_, (void*)dr_offset(7), (void*)v) != 0)
    return false;
  watch_used_[slot] = true;
  watch_slots_[slot] = addr;
  return true;
}

void DebuggerSession::clear_debug_status() {
  ptrace(PTRACE_POKEUSER, pid_, (void*)dr_offset(6), nullptr);
}

InjectionReceipt DebuggerSession::inject_hard(const ErrorSpec& spec) {
  require_live();
  if (!is_hard_mode(spec.mode))
    throw ConfigError("inject_hard: spec mode is not a hard variant");
  std::uint64_t addr = resolve(spec.target, false);
  bool was_running = !stopped_;
  if (was_running) interrupt();

  std::uint8_t pre = peek_byte(addr);
  std::uint8_t bit_mask = std::uint8_t(1u << spec.target.bit);
  bool stuck_high;
  switch (spec.mode) {
    case ErrorMode::HardStuck0: stuck_high = false; break;
    case ErrorMode::HardStuck1: stuck_high = true; break;
    default: stuck_high = (pre & bit_mask) != 0; break;
  }

  Pin& pin = pins_[addr];
  pin.mask |= bit_mask;
  if (stuck_high)
    pin.value |= bit_mask;
  else
    pin.value &= std::uint8_t(~bit_mask);
  pin.interval = spec.reassert_interval;

  std::uint8_t post = std::uint8_t((pre & ~pin.mask) | pin.value);
  if (post != pre) poke_byte(addr, post);

  pin.degraded = !arm_watchpoint(addr);
  if (pin.degraded) {
    if (!degraded_ || spec.reassert_interval < reassert_interval_)
      reassert_interval_ = spec.reassert_interval;
    degraded_ = true;
    next_reassert_ = std::chrono::steady_clock::now() + reassert_interval_;
  }

  InjectionReceipt r;
  r.action = InjectionReceipt::Action::Pin;
  r.target = spec.target;
  r.mode = spec.mode;
  r.pre_byte = pre;
  r.post_byte = post;
  r.degraded = pin.degraded;
  r.unix_ms = unix_now_ms();
  receipts_.push_back(r);
  if (was_running && live_) resume();
  return r;
}

void DebuggerSession::reassert_all_pins() {
  for (const auto& [addr, pin] : pins_) {
    std::uint8_t cur = peek_byte(addr);
    std::uint8_t want = std::uint8_t((cur & ~pin.mask) | pin.value);
    if (want == cur) continue;
    poke_byte(addr, want);
    InjectionReceipt r;
    r.action = InjectionReceipt::Action::Reassert;
    // Region/bit of the original spec are not reconstructed from the raw
    // address; receipts carry the byte-level evidence.
    r.target.region_index = 0;
    r.target.offset = addr;
    r.target.bit = 0;
    r.mode = ErrorMode::HardStuckCurrent;
    r.pre_byte = cur;
    r.post_byte = want;
    r.degraded = pin.degraded;
    r.unix_ms = unix_now_ms();
    receipts_.push_back(r);
  }
}

bool DebuggerSession::handle_status(int status) {
  if (WIFEXITED(status)) {
    live_ = false;
    stopped_ = false;
    pending_.push_back({Event::Kind::Exited, WEXITSTATUS(status)});
    return false;
  }
  if (WIFSIGNALED(status)) {
    live_ = false;
    stopped_ = false;
    pending_.push_back({Event::Kind::Signaled, WTERMSIG(status)});
    return false;
  }
  if (!WIFSTOPPED(status)) return false;

  int sig = WSTOPSIG(status);
  if (sig == SIGTRAP) {
    errno = 0;
    long dr6 = ptrace(PTRACE_PEEKUSER, pid_, (void*)dr_offset(6), nullptr);
    bool peek_ok = !(dr6 == -1 && errno != 0);
    if (peek_ok && (dr6 & 0xf) != 0) {
      reassert_all_pins();
      clear_debug_status();
      pending_.push_back({Event::Kind::WatchHit, int(dr6 & 0xf)});
      if (interrupt_pending_) {
        stopped_ = true;
        return true;
      }
      xptrace(PTRACE_CONT, pid_, nullptr, nullptr, "debugger: continue");
      return false;
    }
    if (interrupt_pending_) {
      stopped_ = true;
      return true;
    }
    // Tracer-induced trap with no watch bit; swallow it and keep going.
    xptrace(PTRACE_CONT, pid_, nullptr, nullptr, "debugger: continue");
    return false;
  }
  if (sig == SIGSTOP && interrupt_pending_) {
    interrupt_pending_ = false;
    stopped_ = true;
    return true;
  }
  // Forward any other signal to the target and keep going.
  xptrace(PTRACE_CONT, pid_, nullptr, (void*)(long)sig, "debugger: continue");
  return false;
}

void DebuggerSession::wait_for_stop() {
  while (live_ && !stopped_) {
    int status = 0;
    pid_t r = waitpid(pid_, &status, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw SessionError(errno_text("debugger: wait"));
    }
    handle_status(status);
  }
}

void DebuggerSession::interrupt() {
  require_live();
  if (stopped_) return;
  interrupt_pending_ = true;
  if (kill(pid_, SIGSTOP) != 0 && errno != ESRCH)
    throw SessionError(errno_text("debugger: interrupt"));
  wait_for_stop();
  interrupt_pending_ = false;
  if (!live_) throw SessionError("debugger: target terminated during stop");
}

void DebuggerSession::resume() {
  require_live();
  if (!stopped_) return;
  xptrace(PTRACE_CONT, pid_, nullptr, nullptr, "debugger: resume");
  stopped_ = false;
}

Event DebuggerSession::watch_events(std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (!pending_.empty()) {
      Event e = pending_.front();
      pending_.erase(pending_.begin());
      return e;
    }
    if (!live_) return {Event::Kind::Timeout, 0};

    int status = 0;
    pid_t r = waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      handle_status(status);
      continue;
    }
    if (r < 0 && errno != EINTR && errno != ECHILD)
      throw SessionError(errno_text("debugger: wait"));

    auto now = std::chrono::steady_clock::now();
    if (degraded_ && !stopped_ && now >= next_reassert_) {
      interrupt();
      reassert_all_pins();
      resume();
      next_reassert_ = now + reassert_interval_;
      continue;
    }
    if (now >= deadline) return {Event::Kind::Timeout, 0};
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
}

}  // namespace hrmlab
