#include "mist/errors.hpp"

namespace mist {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DimensionUnsupported: return "DimensionUnsupported";
    case ErrorCode::LossyCast: return "LossyCast";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::BoxOutOfRange: return "BoxOutOfRange";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::AmbiguousMatch: return "AmbiguousMatch";
    case ErrorCode::BadCustomFolds: return "BadCustomFolds";
    case ErrorCode::EmptyHistogram: return "EmptyHistogram";
    case ErrorCode::NoForegroundVoxels: return "NoForegroundVoxels";
    case ErrorCode::NoUsablePatients: return "NoUsablePatients";
    case ErrorCode::NonPositiveSpacing: return "NonPositiveSpacing";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::EmptySurface: return "EmptySurface";
    case ErrorCode::NoPredictionsFound: return "NoPredictionsFound";
    case ErrorCode::CohortMismatch: return "CohortMismatch";
    case ErrorCode::PredictorShapeError: return "PredictorShapeError";
    case ErrorCode::ProvenanceMissing: return "ProvenanceMissing";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

}  // namespace mist
