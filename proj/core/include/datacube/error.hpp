#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace datacube {

// Every failure surfaced by the library carries one of these codes. The
// names double as the wire spelling used in Error envelopes.
enum class ErrorCode {
  // dataset
  MissingHeader,
  DuplicateColumn,
  MissingIdOrYearColumn,
  NonNumericValue,
  DuplicateIdYearPair,
  QuotedValueUnsupported,
  ColumnCountMismatch,
  InvalidField,
  IndexOutOfRange,
  UnknownColumn,
  UnknownIndividual,
  InvalidRange,
  // viewmath
  DegenerateAnchors,
  LabelMismatch,
  DegenerateDirection,
  NoRegionColumn,
  // protocol
  FrameTooLarge,
  MalformedFrame,
  UnknownKind,
  SchemaViolation,
  SequenceGap,
  VersionMismatch,
  // server
  SessionFull,
  AnchorAlreadySet,
  NotJoined,
  ObserverWriteDenied,
  StorageUnavailable,
  NoDatasetLoaded,
  // client
  NoServerFound,
  AlignmentFailed,
  NotSynced,
  MissingControllerOrientation,
  // cli
  PortInUse,
  BadConfig,
  ScenarioParseError,
  DivergenceDetected,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace datacube
