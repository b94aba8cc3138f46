#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathforge {

enum class ErrorKind {
  InvalidArgument,
  MalformedFile,
  DanglingEdge,
  DuplicateId,
  DimensionMismatch,
  ZeroVector,
  ConflictingKinds,
  EmptyGraph,
  MalformedJson,
  UnknownSchemaKind,
  NoStarts,
  NoEnds,
  NoPaths,
  GenerationFailed,
  UnparseableResponse,
  JudgeFailed,
  JudgeOutOfRange,
  EmptyChain,
  IoFailure,
  MalformedRecord,
  NotWellFormed,
  GroupTooSmall,
  NonFinite,
  BadConfig,
  EmptyReference,
  Transport,
  Timeout,
  MalformedReply,
  UnknownCommand,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::DanglingEdge: return "DanglingEdge";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::ConflictingKinds: return "ConflictingKinds";
    case ErrorKind::EmptyGraph: return "EmptyGraph";
    case ErrorKind::MalformedJson: return "MalformedJson";
    case ErrorKind::UnknownSchemaKind: return "UnknownSchemaKind";
    case ErrorKind::NoStarts: return "NoStarts";
    case ErrorKind::NoEnds: return "NoEnds";
    case ErrorKind::NoPaths: return "NoPaths";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::UnparseableResponse: return "UnparseableResponse";
    case ErrorKind::JudgeFailed: return "JudgeFailed";
    case ErrorKind::JudgeOutOfRange: return "JudgeOutOfRange";
    case ErrorKind::EmptyChain: return "EmptyChain";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::NotWellFormed: return "NotWellFormed";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::EmptyReference: return "EmptyReference";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::MalformedReply: return "MalformedReply";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Failures of an external service (transport, judge, generator).
  bool is_service_failure() const noexcept {
    switch (kind_) {
      case ErrorKind::Transport:
      case ErrorKind::Timeout:
      case ErrorKind::MalformedReply:
      case ErrorKind::GenerationFailed:
      case ErrorKind::JudgeFailed:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

}  // namespace pathforge
