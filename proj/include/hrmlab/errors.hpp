#pragma once

#include <stdexcept>
#include <string>

namespace hrmlab {

// Base for all library errors. Subclasses distinguish the failure domains
// callers are expected to branch on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed textual input (maps dump lines, TOML, JSON logs).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid data that parsed fine (overlapping regions, bad seq).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A sampling request exceeds the available domain.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// No region/segment matches the requested filter.
class EmptyDomainError : public Error {
 public:
  using Error::Error;
};

// Failed to start a target process.
class LaunchError : public Error {
 public:
  using Error::Error;
};

// Out-of-bounds or otherwise invalid memory access through a backend.
class AccessError : public Error {
 public:
  using Error::Error;
};

// Operation on a terminated or otherwise unusable session.
class SessionError : public Error {
 public:
  using Error::Error;
};

// Bad user-supplied configuration (plan files, workload parameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing prerequisites for a trial (e.g. no golden output).
class SetupError : public Error {
 public:
  using Error::Error;
};

// Resume attempted against a log that does not match the plan.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Design evaluation cannot proceed (missing profile rows, invalid assignment).
class EvalError : public Error {
 public:
  using Error::Error;
};

// A bundled workload violated its own determinism contract.
class WorkloadDefectError : public Error {
 public:
  using Error::Error;
};

// Response stream cannot be framed; the enclosing trial becomes
// infrastructure-invalid rather than a measured outcome.
class FramingError : public Error {
 public:
  using Error::Error;
};

// A workload exceeded its per-query step budget (runaway traversal under
// corruption). Trials classify it as a hang.
class StepBudgetExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace hrmlab
