#pragma once

#include <stdexcept>
#include <string>

namespace sspe {

enum class ErrorCode {
  DegenerateQuaternion,
  Precondition,
  BehindCamera,
  ParallelLines,
  Parse,
  InsufficientGeometry,
  Size,
  OcclusionExhausted,
  Io,
  DegenerateGroup,
  VotingFailed,
  InsufficientCorrespondences,
  DegenerateConfiguration,
  NumericalFailure,
  Config,
  DegenerateFeature,
  Contract,
  UndefinedMetric,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateQuaternion: return "degenerate quaternion";
    case ErrorCode::Precondition: return "precondition violated";
    case ErrorCode::BehindCamera: return "point behind camera";
    case ErrorCode::ParallelLines: return "parallel lines";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::InsufficientGeometry: return "insufficient geometry";
    case ErrorCode::Size: return "size error";
    case ErrorCode::OcclusionExhausted: return "occlusion exhausted";
    case ErrorCode::Io: return "I/O error";
    case ErrorCode::DegenerateGroup: return "degenerate group";
    case ErrorCode::VotingFailed: return "voting failed";
    case ErrorCode::InsufficientCorrespondences: return "insufficient correspondences";
    case ErrorCode::DegenerateConfiguration: return "degenerate configuration";
    case ErrorCode::NumericalFailure: return "numerical failure";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::DegenerateFeature: return "degenerate feature";
    case ErrorCode::Contract: return "contract violation";
    case ErrorCode::UndefinedMetric: return "undefined metric";
  }
  return "unknown error";
}

// Every failure in the library is reported as an sspe::Error carrying a code,
// so callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sspe
