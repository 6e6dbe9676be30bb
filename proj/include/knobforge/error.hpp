#pragma once

#include <stdexcept>
#include <string>

namespace knobforge {

/// Base of every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KNOBFORGE_DEFINE_ERROR(Name) \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

KNOBFORGE_DEFINE_ERROR(ParseError);
KNOBFORGE_DEFINE_ERROR(SchemaError);
KNOBFORGE_DEFINE_ERROR(IoError);
KNOBFORGE_DEFINE_ERROR(InsufficientRows);
KNOBFORGE_DEFINE_ERROR(ScalerScopeError);
KNOBFORGE_DEFINE_ERROR(DegenerateInput);
KNOBFORGE_DEFINE_ERROR(ClusterDegeneracy);
KNOBFORGE_DEFINE_ERROR(InvalidK);
KNOBFORGE_DEFINE_ERROR(UndefinedSilhouette);
KNOBFORGE_DEFINE_ERROR(NumericalError);
KNOBFORGE_DEFINE_ERROR(InvalidTarget);
KNOBFORGE_DEFINE_ERROR(InvalidHyperparams);
KNOBFORGE_DEFINE_ERROR(ShapeError);
KNOBFORGE_DEFINE_ERROR(AlignmentError);
KNOBFORGE_DEFINE_ERROR(UndefinedMape);
KNOBFORGE_DEFINE_ERROR(KeyError);
KNOBFORGE_DEFINE_ERROR(ConfigError);

#undef KNOBFORGE_DEFINE_ERROR

}  // namespace knobforge
