#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hrmlab/region_map.hpp"

namespace hrmlab {

enum class ErrorMode { Soft, HardStuck0, HardStuck1, HardStuckCurrent };

const char* error_mode_name(ErrorMode m);
std::optional<ErrorMode> error_mode_from_name(const std::string& s);
inline bool is_hard_mode(ErrorMode m) { return m != ErrorMode::Soft; }

// When an injection fires relative to the trial's query stream.
struct InjectTrigger {
  enum class Kind { AtStart, AfterQueries, AfterDelay };
  Kind kind = Kind::AtStart;
  std::uint64_t after_queries = 0;
  std::chrono::milliseconds delay{0};

  static InjectTrigger at_start() { return {}; }
  static InjectTrigger after_queries_done(std::uint64_t n) {
    InjectTrigger t;
    t.kind = Kind::AfterQueries;
    t.after_queries = n;
    return t;
  }
};

// One injectable error.
struct ErrorSpec {
  InjectionTarget target;
  ErrorMode mode = ErrorMode::Soft;
  InjectTrigger inject_at;
  // Hard modes only: how often the stuck value is re-asserted when exact
  // stuck-at semantics are unavailable (debugger backend without a
  // watchpoint). The arena backend re-asserts on every access instead.
  std::chrono::milliseconds reassert_interval{1};
};

// Every byte mutation a backend performs is recorded in exactly one receipt.
struct InjectionReceipt {
  enum class Action { Flip, Pin, Reassert };
  Action action = Action::Flip;
  InjectionTarget target;
  ErrorMode mode = ErrorMode::Soft;
  std::uint8_t pre_byte = 0;
  std::uint8_t post_byte = 0;
  bool degraded = false;  // watchpoint unavailable, timed re-assertion used
  std::int64_t unix_ms = 0;
};

const char* receipt_action_name(InjectionReceipt::Action a);

// Target lifecycle events surfaced by watch_events().
struct Event {
  enum class Kind { Exited, Signaled, Stopped, WatchHit, Timeout };
  Kind kind = Kind::Timeout;
  int code = 0;  // exit code or signal number
};

// The backend contract implemented by the arena and debugger backends. A
// session is confined to one controlling thread; distinct sessions are
// independent.
class BackendSession {
 public:
  virtual ~BackendSession() = default;

  virtual const MemoryRegionMap& region_map() const = 0;

  virtual std::uint8_t read_byte(const InjectionTarget& t) = 0;
  virtual void write_byte(const InjectionTarget& t, std::uint8_t value) = 0;

  virtual InjectionReceipt inject_soft(const ErrorSpec& spec) = 0;
  virtual InjectionReceipt inject_hard(const ErrorSpec& spec) = 0;

  virtual Event watch_events(std::chrono::milliseconds timeout) = 0;

  virtual bool live() const = 0;

  // All receipts accumulated so far, including re-assertions.
  virtual const std::vector<InjectionReceipt>& receipts() const = 0;
};

std::int64_t unix_now_ms();

}  // namespace hrmlab
