#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chartinstruct {

// Every failure the library reports through an exception carries one of these
// codes. Per-item failures inside batch operations are returned as values
// instead (see the individual report types).
enum class ErrorCode {
  EmptyInput,
  RaggedRow,
  FileUnreadable,
  BadRatios,
  BadMix,
  TemplateInvalid,
  Exhausted,
  AuthMissing,
  MissingFixture,
  FixtureConflict,
  NotJson,
  ParseFailure,
  DivisionByZero,
  UnboundVariable,
  BadArity,
  TypeMismatch,
  NonFinite,
  BadK,
  DimensionMismatch,
  NTooLarge,
  LengthMismatch,
  EmptyInstruction,
  MissingChart,
  Config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace chartinstruct
