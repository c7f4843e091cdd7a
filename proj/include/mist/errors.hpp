#ifndef MIST_ERRORS_HPP
#define MIST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mist {

enum class ErrorCode {
  IoError,
  BadMagic,
  CorruptHeader,
  UnsupportedDatatype,
  UnsupportedFormat,
  DimensionUnsupported,
  LossyCast,
  DegenerateDirection,
  BoxOutOfRange,
  SchemaError,
  MissingChannel,
  MissingMask,
  AmbiguousMatch,
  BadCustomFolds,
  EmptyHistogram,
  NoForegroundVoxels,
  NoUsablePatients,
  NonPositiveSpacing,
  UnknownLabel,
  ShapeMismatch,
  GeometryMismatch,
  EmptySurface,
  NoPredictionsFound,
  CohortMismatch,
  PredictorShapeError,
  ProvenanceMissing,
  EmptyList,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mist

#endif
