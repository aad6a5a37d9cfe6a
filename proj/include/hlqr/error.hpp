#pragma once

#include <stdexcept>
#include <string>

namespace hlqr {

enum class ErrorCode {
  NotSymmetric,
  NotHurwitz,
  SolverDiverged,
  PreconditionFailed,
  DimensionMismatch,
  NotOrthonormal,
  RepeatedEigenvalues,
  NotSupported,
  K0NotStabilizing,
  MaxIterExceeded,
  NonFinite,
  ExcitationDeficient,
  RegressionSingular,
  NotStabilizing,
  NonzeroFeedthrough,
  GenerationFailed,
  BudgetExceeded,  // memory estimate over the configured limit
  Timeout,         // wall-clock deadline passed
  ParseError,
};

const char* to_string(ErrorCode code);

/// True for failures of an iterative or data-driven solver, as opposed to
/// rejected inputs. The CLI maps the former to exit code 3 and the latter to 2.
bool is_solver_failure(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hlqr
