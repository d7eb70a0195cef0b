#pragma once

#include <stdexcept>
#include <string>

namespace dyadgrow {

enum class ErrorCode {
  // data problems
  MissingColumn,
  ParseError,
  DuplicatePersonWave,
  DyadNotPaired,
  UnknownWave,
  EmptySeries,
  EmptyInput,
  MissingPartnerWave,
  NotEnoughDyads,
  InvalidParams,
  WrongStage,
  CodingMismatch,
  BadLength,
  AllZero,
  UnknownTerm,
  TermMismatch,
  Io,
  // estimation problems
  SingularSystem,
  NotPositiveDefinite,
  DidNotConverge,
  ChainInitFailure,
  ZeroVariance,
};

const char* to_string(ErrorCode code);

// True for codes that signal a failed estimate rather than bad input.
bool is_estimation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dyadgrow
