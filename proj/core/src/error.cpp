#include "datacube/error.hpp"

#include <array>
#include <utility>

namespace datacube {
namespace {

constexpr std::array kNames = {
    std::pair{ErrorCode::MissingHeader, std::string_view{"MissingHeader"}},
    std::pair{ErrorCode::DuplicateColumn, std::string_view{"DuplicateColumn"}},
    std::pair{ErrorCode::MissingIdOrYearColumn, std::string_view{"MissingIdOrYearColumn"}},
    std::pair{ErrorCode::NonNumericValue, std::string_view{"NonNumericValue"}},
    std::pair{ErrorCode::DuplicateIdYearPair, std::string_view{"DuplicateIdYearPair"}},
    std::pair{ErrorCode::QuotedValueUnsupported, std::string_view{"QuotedValueUnsupported"}},
    std::pair{ErrorCode::ColumnCountMismatch, std::string_view{"ColumnCountMismatch"}},
    std::pair{ErrorCode::InvalidField, std::string_view{"InvalidField"}},
    std::pair{ErrorCode::IndexOutOfRange, std::string_view{"IndexOutOfRange"}},
    std::pair{ErrorCode::UnknownColumn, std::string_view{"UnknownColumn"}},
    std::pair{ErrorCode::UnknownIndividual, std::string_view{"UnknownIndividual"}},
    std::pair{ErrorCode::InvalidRange, std::string_view{"InvalidRange"}},
    std::pair{ErrorCode::DegenerateAnchors, std::string_view{"DegenerateAnchors"}},
    std::pair{ErrorCode::LabelMismatch, std::string_view{"LabelMismatch"}},
    std::pair{ErrorCode::DegenerateDirection, std::string_view{"DegenerateDirection"}},
    std::pair{ErrorCode::NoRegionColumn, std::string_view{"NoRegionColumn"}},
    std::pair{ErrorCode::FrameTooLarge, std::string_view{"FrameTooLarge"}},
    std::pair{ErrorCode::MalformedFrame, std::string_view{"MalformedFrame"}},
    std::pair{ErrorCode::UnknownKind, std::string_view{"UnknownKind"}},
    std::pair{ErrorCode::SchemaViolation, std::string_view{"SchemaViolation"}},
    std::pair{ErrorCode::SequenceGap, std::string_view{"SequenceGap"}},
    std::pair{ErrorCode::VersionMismatch, std::string_view{"VersionMismatch"}},
    std::pair{ErrorCode::SessionFull, std::string_view{"SessionFull"}},
    std::pair{ErrorCode::AnchorAlreadySet, std::string_view{"AnchorAlreadySet"}},
    std::pair{ErrorCode::NotJoined, std::string_view{"NotJoined"}},
    std::pair{ErrorCode::ObserverWriteDenied, std::string_view{"ObserverWriteDenied"}},
    std::pair{ErrorCode::StorageUnavailable, std::string_view{"StorageUnavailable"}},
    std::pair{ErrorCode::NoDatasetLoaded, std::string_view{"NoDatasetLoaded"}},
    std::pair{ErrorCode::NoServerFound, std::string_view{"NoServerFound"}},
    std::pair{ErrorCode::AlignmentFailed, std::string_view{"AlignmentFailed"}},
    std::pair{ErrorCode::NotSynced, std::string_view{"NotSynced"}},
    std::pair{ErrorCode::MissingControllerOrientation,
              std::string_view{"MissingControllerOrientation"}},
    std::pair{ErrorCode::PortInUse, std::string_view{"PortInUse"}},
    std::pair{ErrorCode::BadConfig, std::string_view{"BadConfig"}},
    std::pair{ErrorCode::ScenarioParseError, std::string_view{"ScenarioParseError"}},
    std::pair{ErrorCode::DivergenceDetected, std::string_view{"DivergenceDetected"}},
    std::pair{ErrorCode::IoError, std::string_view{"IoError"}},
};

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

}  // namespace datacube
