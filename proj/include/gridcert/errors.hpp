#pragma once

#include <stdexcept>
#include <string>

namespace gridcert {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GRIDCERT_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

GRIDCERT_DEFINE_ERROR(InvalidTopology);
GRIDCERT_DEFINE_ERROR(UnbalancedInjection);
GRIDCERT_DEFINE_ERROR(SingularSystem);
GRIDCERT_DEFINE_ERROR(NotACut);
GRIDCERT_DEFINE_ERROR(ParseError);
GRIDCERT_DEFINE_ERROR(DanglingReference);
GRIDCERT_DEFINE_ERROR(DisconnectedCase);
GRIDCERT_DEFINE_ERROR(IoError);
GRIDCERT_DEFINE_ERROR(SchemaError);
GRIDCERT_DEFINE_ERROR(InsufficientLinks);
GRIDCERT_DEFINE_ERROR(NumericalFailure);
GRIDCERT_DEFINE_ERROR(InfeasibleModel);
GRIDCERT_DEFINE_ERROR(PreconditionViolation);

#undef GRIDCERT_DEFINE_ERROR

}  // namespace gridcert
