#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sketchlattice {

enum class ErrorCode {
  // usage
  Usage,
  InvalidConfig,
  // data
  MalformedRecord,
  SequenceTooLong,
  OutOfRange,
  EmptyLattice,
  DatasetEmpty,
  Io,
  CheckpointWriteFailure,
  // numeric / model
  ShapeMismatch,
  TokenOutOfVocabulary,
  AllItemsSkipped,
  NumericalUnderflow,
  CheckpointFormat,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyLattice: return "EmptyLattice";
    case ErrorCode::DatasetEmpty: return "DatasetEmpty";
    case ErrorCode::Io: return "Io";
    case ErrorCode::CheckpointWriteFailure: return "CheckpointWriteFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TokenOutOfVocabulary: return "TokenOutOfVocabulary";
    case ErrorCode::AllItemsSkipped: return "AllItemsSkipped";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::CheckpointFormat: return "CheckpointFormat";
  }
  return "Unknown";
}

/// Process exit code for an error: 2 usage, 3 data, 4 numeric/model.
constexpr int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage:
    case ErrorCode::InvalidConfig:
      return 2;
    case ErrorCode::MalformedRecord:
    case ErrorCode::SequenceTooLong:
    case ErrorCode::OutOfRange:
    case ErrorCode::EmptyLattice:
    case ErrorCode::DatasetEmpty:
    case ErrorCode::Io:
    case ErrorCode::CheckpointWriteFailure:
      return 3;
    default:
      return 4;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace sketchlattice
