#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace satforge {

enum class ErrorCode {
    UnreadableFile,
    UnsupportedFormat,
    InvalidTileSize,
    InconsistentGrid,
    OutOfBounds,
    InvalidParams,
    DegeneratePolygon,
    InvalidSpec,
    ShapeMismatch,
    EmptyTrainingSet,
    NonFiniteLoss,
    DimMismatch,
    MaskOutOfBounds,
    WrongFeatureKind,
    CheckpointMismatch,
    WindowTooLarge,
    ScorerUnavailable,
    DegenerateManifest,
    SingleClass,
    BackboneUnavailable,
    TooFewImages,
    MissingAnnotations,
    EmptyDirectory,
    JobFailed,
    UsageError,
    NotFound,
    Conflict,
};

std::string_view to_string(ErrorCode code);

// Every library failure is raised as this type; `details` carries
// machine-readable context that the CLI and HTTP layers forward verbatim.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json details = nlohmann::json::object())
        : std::runtime_error(message), code_(code), details_(std::move(details)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& details() const noexcept { return details_; }

    // {code, message, details}
    nlohmann::json to_json() const;

private:
    ErrorCode code_;
    nlohmann::json details_;
};

}  // namespace satforge
