#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlorp {

enum class ErrorKind {
  MalformedRow,
  RateOutOfRange,
  EmptyCorpus,
  IoFailure,
  VersionMismatch,
  CorruptEntry,
  ShapeMismatch,
  BuildMismatch,
  IndexOutOfRange,
  EmptyDataset,
  NonFiniteLoss,
  EmptySubjectLine,
  EmptyInput,
  AllZeroActuals,
  TooFewRecords,
};

std::string_view to_string(ErrorKind kind);

// Every recoverable failure in the library is reported through this type so
// callers (CLI, service) can map the kind onto exit codes or HTTP statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::RateOutOfRange: return "RateOutOfRange";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptEntry: return "CorruptEntry";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BuildMismatch: return "BuildMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptySubjectLine: return "EmptySubjectLine";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::AllZeroActuals: return "AllZeroActuals";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
  }
  return "Unknown";
}

}  // namespace nlorp
