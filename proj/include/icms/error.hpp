#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace icms {

enum class ErrorCode {
  Validation,
  Schema,
  Parse,
  NotFound,
  State,
  Contract,
  InsufficientData,
  RuleSyntax,
  Config,
  Storage,
  Recovery,
  Argument,
};

std::string_view to_string(ErrorCode code);

// Base of every error the engines raise. The code maps onto the API's
// machine-readable error codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed JSON input; offset is the byte position reported by the parser.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error(ErrorCode::Parse, message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Any rule DSL failure. Line and column are 1-based.
class RuleSyntaxError : public Error {
 public:
  RuleSyntaxError(const std::string& message, int line, int column)
      : Error(ErrorCode::RuleSyntax, message), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

// The message always names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(ErrorCode::Config, message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Raised while replaying an event log. sequence is the record that could not
// be applied.
class RecoveryError : public Error {
 public:
  RecoveryError(const std::string& message, std::uint64_t sequence)
      : Error(ErrorCode::Recovery, message), sequence_(sequence) {}

  std::uint64_t sequence() const noexcept { return sequence_; }

 private:
  std::uint64_t sequence_;
};

}  // namespace icms
