#ifndef POTRL_ERROR_HPP_
#define POTRL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace potrl {

// Base class for every error raised by the library. The concrete subclasses
// mirror the failure categories callers are expected to branch on.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POTRL_DEFINE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

POTRL_DEFINE_ERROR(InvalidShapeError);
POTRL_DEFINE_ERROR(InvalidActionError);
POTRL_DEFINE_ERROR(OutOfRangeError);
POTRL_DEFINE_ERROR(SpawnError);
POTRL_DEFINE_ERROR(InvalidConfigError);
POTRL_DEFINE_ERROR(InvalidOutcomeError);
POTRL_DEFINE_ERROR(InvalidWeightError);
POTRL_DEFINE_ERROR(EpisodeFinishedError);
POTRL_DEFINE_ERROR(ShapeMismatchError);
POTRL_DEFINE_ERROR(UsageError);
POTRL_DEFINE_ERROR(NonFiniteError);
POTRL_DEFINE_ERROR(IoError);
POTRL_DEFINE_ERROR(ParseError);

#undef POTRL_DEFINE_ERROR

}  // namespace potrl

#endif  // POTRL_ERROR_HPP_
