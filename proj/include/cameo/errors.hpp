#pragma once

#include <stdexcept>
#include <string>

namespace cameo {

// Base for every error raised by the library. The CLI maps ConfigError and
// UsageError to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CAMEO_DEFINE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

CAMEO_DEFINE_ERROR(UnknownToken);
CAMEO_DEFINE_ERROR(InvalidTokenId);
CAMEO_DEFINE_ERROR(ConfigError);
CAMEO_DEFINE_ERROR(UsageError);
CAMEO_DEFINE_ERROR(IoError);
CAMEO_DEFINE_ERROR(CorpusFormatError);
CAMEO_DEFINE_ERROR(ShapeError);
CAMEO_DEFINE_ERROR(InterventionConflict);
CAMEO_DEFINE_ERROR(ContextTooLong);
CAMEO_DEFINE_ERROR(CheckpointMismatch);
CAMEO_DEFINE_ERROR(CheckpointFormatError);
CAMEO_DEFINE_ERROR(EmptyStore);
CAMEO_DEFINE_ERROR(TrainingDiverged);
CAMEO_DEFINE_ERROR(ProbeSetupError);
CAMEO_DEFINE_ERROR(PlanError);
CAMEO_DEFINE_ERROR(LengthMismatch);
CAMEO_DEFINE_ERROR(OutOfRange);
CAMEO_DEFINE_ERROR(InvalidArgument);

#undef CAMEO_DEFINE_ERROR

}  // namespace cameo
