#include "icms/error.hpp"

namespace icms {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Validation: return "VALIDATION";
    case ErrorCode::Schema: return "SCHEMA";
    case ErrorCode::Parse: return "PARSE";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::State: return "STATE";
    case ErrorCode::Contract: return "CONTRACT";
    case ErrorCode::InsufficientData: return "INSUFFICIENT_DATA";
    case ErrorCode::RuleSyntax: return "RULE_SYNTAX";
    case ErrorCode::Config: return "CONFIG";
    case ErrorCode::Storage: return "STORAGE";
    case ErrorCode::Recovery: return "RECOVERY";
    case ErrorCode::Argument: return "ARGUMENT";
  }
  return "UNKNOWN";
}

}  // namespace icms
