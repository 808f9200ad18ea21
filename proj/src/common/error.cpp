#include "satforge/error.hpp"

namespace satforge {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnreadableFile: return "UnreadableFile";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::InvalidTileSize: return "InvalidTileSize";
        case ErrorCode::InconsistentGrid: return "InconsistentGrid";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::DegeneratePolygon: return "DegeneratePolygon";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::MaskOutOfBounds: return "MaskOutOfBounds";
        case ErrorCode::WrongFeatureKind: return "WrongFeatureKind";
        case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorCode::WindowTooLarge: return "WindowTooLarge";
        case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
        case ErrorCode::DegenerateManifest: return "DegenerateManifest";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::BackboneUnavailable: return "BackboneUnavailable";
        case ErrorCode::TooFewImages: return "TooFewImages";
        case ErrorCode::MissingAnnotations: return "MissingAnnotations";
        case ErrorCode::EmptyDirectory: return "EmptyDirectory";
        case ErrorCode::JobFailed: return "JobFailed";
        case ErrorCode::UsageError: return "UsageError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Conflict: return "Conflict";
    }
    return "Unknown";
}

nlohmann::json Error::to_json() const {
    return {{"code", std::string(to_string(code_))}, {"message", what()}, {"details", details_}};
}

}  // namespace satforge
