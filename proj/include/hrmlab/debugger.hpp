#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hrmlab/backend.hpp"

namespace hrmlab {

// BackendSession over a live child process driven through the platform
// tracing API. The child is spawned suspended at entry; the controller
// resumes it, stops it around injections, and watches for termination.
//
// Hard errors arm a per-byte hardware write-watchpoint when a slot is free
// (re-assertion on every write the target performs, trap-after). When the
// slots are exhausted or the registers are unavailable, the pin degrades to
// timed re-assertion at the spec's reassert_interval and the receipt says so.
class DebuggerSession final : public BackendSession {
 public:
  struct Options {
    std::vector<std::pair<std::string, std::string>> env;
    bool stdio_pipes = false;       // wire child stdin/stdout to fds we own
    bool allow_watchpoints = true;  // force the degraded path when false
  };

  static std::unique_ptr<DebuggerSession> spawn(
      const std::vector<std::string>& argv, const Options& opts);
  static std::unique_ptr<DebuggerSession> spawn(
      const std::vector<std::string>& argv) {
    return spawn(argv, Options());
  }
  ~DebuggerSession() override;

  DebuggerSession(const DebuggerSession&) = delete;
  DebuggerSession& operator=(const DebuggerSession&) = delete;

  const MemoryRegionMap& region_map() const override { return map_; }
  // Re-reads the target's maps listing; call once the target has built its
  // working set so heap regions are present.
  void capture_region_map();

  std::uint8_t read_byte(const InjectionTarget& t) override;
  void write_byte(const InjectionTarget& t, std::uint8_t value) override;
  InjectionReceipt inject_soft(const ErrorSpec& spec) override;
  InjectionReceipt inject_hard(const ErrorSpec& spec) override;
  Event watch_events(std::chrono::milliseconds timeout) override;
  bool live() const override { return live_; }
  const std::vector<InjectionReceipt>& receipts() const override {
    return receipts_;
  }

  // Run control. spawn() leaves the target stopped at entry.
  void resume();
  void interrupt();
  bool stopped() const { return stopped_; }

  int pid() const { return pid_; }
  // Valid only with Options::stdio_pipes; we hold the write end of the
  // child's stdin and the read end of its stdout.
  int stdin_fd() const { return child_stdin_; }
  int stdout_fd() const { return child_stdout_; }
  void close_stdin();

  // SIGKILL + reap; idempotent. The destructor calls it, so no orphans.
  void terminate();

  bool degraded_reassertion() const { return degraded_; }

 private:
  DebuggerSession() = default;

  struct Pin {
    std::uint8_t mask = 0;
    std::uint8_t value = 0;
    bool degraded = false;
    std::chrono::milliseconds interval{1};
  };

  std::uint64_t resolve(const InjectionTarget& t, bool for_write) const;
  std::uint8_t peek_byte(std::uint64_t addr);
  void poke_byte(std::uint64_t addr, std::uint8_t value);
  void require_live() const;
  // Handles one waitpid status; may queue events, re-assert pins, or
  // auto-continue the target. Returns true if the target is now stopped.
  bool handle_status(int status);
  void wait_for_stop();
  void reassert_all_pins();
  bool arm_watchpoint(std::uint64_t addr);
  void clear_debug_status();

  int pid_ = -1;
  bool live_ = false;
  bool stopped_ = false;
  bool interrupt_pending_ = false;
  bool allow_watchpoints_ = true;
  bool degraded_ = false;
  int child_stdin_ = -1;
  int child_stdout_ = -1;
  MemoryRegionMap map_;
  std::map<std::uint64_t, Pin> pins_;
  std::uint64_t watch_slots_[4] = {0, 0, 0, 0};
  bool watch_used_[4] = {false, false, false, false};
  std::vector<InjectionReceipt> receipts_;
  std::vector<Event> pending_;
  std::chrono::steady_clock::time_point next_reassert_{};
  std::chrono::milliseconds reassert_interval_{1};
};

}  // namespace hrmlab
