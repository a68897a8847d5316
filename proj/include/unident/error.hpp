#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unident {

enum class ErrorCode {
  InvalidMatrix,
  ShapeError,
  NotStabilizable,
  SingularGain,
  UnsupportedInitialState,
  EvalError,
  RankError,
  ReducedLoopUnstable,
  Diverged,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NotStabilizable: return "NotStabilizable";
    case ErrorCode::SingularGain: return "SingularGain";
    case ErrorCode::UnsupportedInitialState: return "UnsupportedInitialState";
    case ErrorCode::EvalError: return "EvalError";
    case ErrorCode::RankError: return "RankError";
    case ErrorCode::ReducedLoopUnstable: return "ReducedLoopUnstable";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Domain error carrying a machine-readable code. Every failure the library
/// reports to callers is one of these.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace unident
