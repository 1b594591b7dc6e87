#pragma once

#include <stdexcept>
#include <string>

namespace elcorec {

enum class ErrorCode {
  InvalidArgument = 1,
  Io,
  Format,
  Domain,
  Dimension,
  Lookup,
  Referential,
  DegenerateSplit,
  Numeric,
  Construction,
  Injection,
  Stage,
  Internal,
};

/// Base exception for everything the library throws on purpose. The code maps
/// one-to-one onto the C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define ELCOREC_DEFINE_ERROR(Name, Code)                                        \
  class Name : public Error {                                                    \
   public:                                                                       \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {}     \
  };

ELCOREC_DEFINE_ERROR(InvalidArgumentError, InvalidArgument)
ELCOREC_DEFINE_ERROR(IoError, Io)
ELCOREC_DEFINE_ERROR(FormatError, Format)
ELCOREC_DEFINE_ERROR(DomainError, Domain)
ELCOREC_DEFINE_ERROR(DimensionError, Dimension)
ELCOREC_DEFINE_ERROR(LookupError, Lookup)
ELCOREC_DEFINE_ERROR(ReferentialError, Referential)
ELCOREC_DEFINE_ERROR(DegenerateSplitError, DegenerateSplit)
ELCOREC_DEFINE_ERROR(NumericError, Numeric)
ELCOREC_DEFINE_ERROR(ConstructionError, Construction)
ELCOREC_DEFINE_ERROR(InjectionError, Injection)
ELCOREC_DEFINE_ERROR(StageError, Stage)

#undef ELCOREC_DEFINE_ERROR

}  // namespace elcorec
