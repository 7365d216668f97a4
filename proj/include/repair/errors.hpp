#pragma once

#include <stdexcept>
#include <string>

namespace repair {

// Exit codes used by the CLI and mirrored by the exception hierarchy.
//   0 success, 2 input error, 3 certificate failure, 4 search/budget exhaustion.
enum class ExitCode : int {
  Ok = 0,
  InputError = 2,
  CertificateFailure = 3,
  BudgetExhausted = 4,
};

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual ExitCode code() const { return ExitCode::InputError; }
};

// Malformed or inconsistent caller input (degree mismatch, bad word, bad JSON).
struct InputError : Error {
  using Error::Error;
  ExitCode code() const override { return ExitCode::InputError; }
};

// A constructed object failed one of its certified invariants.  These indicate
// either a genuinely degenerate instance or an internal bug; they are never
// silently swallowed.
struct CertificateError : Error {
  using Error::Error;
  ExitCode code() const override { return ExitCode::CertificateFailure; }
};

// A bounded search (randomized realizer, tracing walk, convexification loop)
// ran out of its configured budget.
struct BudgetError : Error {
  using Error::Error;
  ExitCode code() const override { return ExitCode::BudgetExhausted; }
};

}  // namespace repair
