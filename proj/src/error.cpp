#include "hlqr/error.hpp"

namespace hlqr {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::RepeatedEigenvalues: return "RepeatedEigenvalues";
    case ErrorCode::NotSupported: return "NotSupported";
    case ErrorCode::K0NotStabilizing: return "K0NotStabilizing";
    case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ExcitationDeficient: return "ExcitationDeficient";
    case ErrorCode::RegressionSingular: return "RegressionSingular";
    case ErrorCode::NotStabilizing: return "NotStabilizing";
    case ErrorCode::NonzeroFeedthrough: return "NonzeroFeedthrough";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

bool is_solver_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::SolverDiverged:
    case ErrorCode::MaxIterExceeded:
    case ErrorCode::NonFinite:
    case ErrorCode::RegressionSingular:
    case ErrorCode::NotStabilizing:
    case ErrorCode::BudgetExceeded:
    case ErrorCode::Timeout:
      return true;
    default:
      return false;
  }
}

}  // namespace hlqr
