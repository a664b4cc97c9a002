#pragma once

#include <stdexcept>
#include <string>

namespace steerlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define STEERLAB_DEFINE_ERROR(name)                                           \
    class name : public Error {                                               \
      public:                                                                 \
        explicit name(const std::string& what) : Error(#name ": " + what) {}  \
    }

// numerics
STEERLAB_DEFINE_ERROR(InvalidArgument);
STEERLAB_DEFINE_ERROR(DimMismatch);
STEERLAB_DEFINE_ERROR(BatchTooSmall);
STEERLAB_DEFINE_ERROR(NumericalFailure);
STEERLAB_DEFINE_ERROR(AllZeroSpectrum);
STEERLAB_DEFINE_ERROR(NotUnit);
STEERLAB_DEFINE_ERROR(ZeroVector);
STEERLAB_DEFINE_ERROR(AntipodalDirection);

// subspaces and steering
STEERLAB_DEFINE_ERROR(EmptySpan);
STEERLAB_DEFINE_ERROR(DegenerateDirection);
STEERLAB_DEFINE_ERROR(EmptyPrototypes);
STEERLAB_DEFINE_ERROR(MissingArtifact);

// persistence
STEERLAB_DEFINE_ERROR(IoError);
STEERLAB_DEFINE_ERROR(VersionMismatch);
STEERLAB_DEFINE_ERROR(ChecksumMismatch);

// datasets and reports
STEERLAB_DEFINE_ERROR(ParseError);
STEERLAB_DEFINE_ERROR(DuplicateId);
STEERLAB_DEFINE_ERROR(SchemaViolation);
STEERLAB_DEFINE_ERROR(IdMismatch);
STEERLAB_DEFINE_ERROR(ConfigError);

// judges
STEERLAB_DEFINE_ERROR(JudgeUnavailable);
STEERLAB_DEFINE_ERROR(JudgeParseError);

// toy model
STEERLAB_DEFINE_ERROR(BadDims);
STEERLAB_DEFINE_ERROR(DidNotConverge);
STEERLAB_DEFINE_ERROR(HookOutOfRange);
STEERLAB_DEFINE_ERROR(MaxLenExceeded);
STEERLAB_DEFINE_ERROR(NoGateOpenExamples);

#undef STEERLAB_DEFINE_ERROR

}  // namespace steerlab
