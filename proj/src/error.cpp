#include "dyadgrow/error.hpp"

namespace dyadgrow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicatePersonWave: return "DuplicatePersonWave";
    case ErrorCode::DyadNotPaired: return "DyadNotPaired";
    case ErrorCode::UnknownWave: return "UnknownWave";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingPartnerWave: return "MissingPartnerWave";
    case ErrorCode::NotEnoughDyads: return "NotEnoughDyads";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::WrongStage: return "WrongStage";
    case ErrorCode::CodingMismatch: return "CodingMismatch";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::UnknownTerm: return "UnknownTerm";
    case ErrorCode::TermMismatch: return "TermMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DidNotConverge: return "DidNotConverge";
    case ErrorCode::ChainInitFailure: return "ChainInitFailure";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
  }
  return "Unknown";
}

bool is_estimation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::DidNotConverge:
    case ErrorCode::ChainInitFailure:
    case ErrorCode::ZeroVariance:
      return true;
    default:
      return false;
  }
}

}  // namespace dyadgrow
