#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vpbd {

enum class ErrorCode {
  InvalidArgument,
  NotOnBoundary,
  NotUniformlyConvex,
  NoConvergence,
  QuadratureFailure,
  IncompatibleNeumannData,
  NeumannConditionViolated,
  SolverDivergence,
  GrazingStall,
  StepLimitExceeded,
  EmptySupport,
  FlatnessViolated,
  ConfigInvalid,
  IoFailure,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Throws Error(InvalidArgument) when cond is false.
void require(bool cond, const std::string& message);

}  // namespace vpbd
