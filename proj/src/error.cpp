#include "chartinstruct/error.hpp"

namespace chartinstruct {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::BadRatios: return "BadRatios";
    case ErrorCode::BadMix: return "BadMix";
    case ErrorCode::TemplateInvalid: return "TemplateInvalid";
    case ErrorCode::Exhausted: return "Exhausted";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::MissingFixture: return "MissingFixture";
    case ErrorCode::FixtureConflict: return "FixtureConflict";
    case ErrorCode::NotJson: return "NotJson";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::BadArity: return "BadArity";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NTooLarge: return "NTooLarge";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInstruction: return "EmptyInstruction";
    case ErrorCode::MissingChart: return "MissingChart";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace chartinstruct
