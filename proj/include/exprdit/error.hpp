#pragma once

#include <stdexcept>
#include <string>

namespace exprdit {

// Base class for every error raised by the library. The CLI prints what()
// verbatim, so messages are kept to a single line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EXPRDIT_DEFINE_ERROR(Name)            \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

EXPRDIT_DEFINE_ERROR(InvalidShapeError);
EXPRDIT_DEFINE_ERROR(EvaluationError);
EXPRDIT_DEFINE_ERROR(EmptyTrackError);
EXPRDIT_DEFINE_ERROR(DuplicateIdentityError);
EXPRDIT_DEFINE_ERROR(DivergedError);
EXPRDIT_DEFINE_ERROR(CorruptCheckpointError);
EXPRDIT_DEFINE_ERROR(IncompleteCheckpointError);
EXPRDIT_DEFINE_ERROR(IncompleteInputError);
EXPRDIT_DEFINE_ERROR(MalformedManifestError);
EXPRDIT_DEFINE_ERROR(InsufficientFramesError);
EXPRDIT_DEFINE_ERROR(PlacementError);
EXPRDIT_DEFINE_ERROR(ConfigError);
EXPRDIT_DEFINE_ERROR(IoError);

#undef EXPRDIT_DEFINE_ERROR

}  // namespace exprdit
