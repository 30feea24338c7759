#include "vpbd/error.hpp"

namespace vpbd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotOnBoundary: return "NotOnBoundary";
    case ErrorCode::NotUniformlyConvex: return "NotUniformlyConvex";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::IncompatibleNeumannData: return "IncompatibleNeumannData";
    case ErrorCode::NeumannConditionViolated: return "NeumannConditionViolated";
    case ErrorCode::SolverDivergence: return "SolverDivergence";
    case ErrorCode::GrazingStall: return "GrazingStall";
    case ErrorCode::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::FlatnessViolated: return "FlatnessViolated";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void require(bool cond, const std::string& message) {
  if (!cond) throw Error(ErrorCode::InvalidArgument, message);
}

}  // namespace vpbd
