#pragma once

#include <stdexcept>
#include <string>

namespace s2v {

// Root of every error raised by the toolkit. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define S2V_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

S2V_DEFINE_ERROR(DimensionError);
S2V_DEFINE_ERROR(ContractError);
S2V_DEFINE_ERROR(GraphError);
S2V_DEFINE_ERROR(NumericError);
S2V_DEFINE_ERROR(IndexError);
S2V_DEFINE_ERROR(SchemaError);
S2V_DEFINE_ERROR(WindowError);
S2V_DEFINE_ERROR(LoadError);
S2V_DEFINE_ERROR(IntegrityError);
S2V_DEFINE_ERROR(SplitError);
S2V_DEFINE_ERROR(DataError);
S2V_DEFINE_ERROR(DivergenceError);
S2V_DEFINE_ERROR(ProtocolError);
S2V_DEFINE_ERROR(MetricError);
S2V_DEFINE_ERROR(LookupError);
S2V_DEFINE_ERROR(DegenerateVectorError);
S2V_DEFINE_ERROR(ConfigError);
S2V_DEFINE_ERROR(IoError);

#undef S2V_DEFINE_ERROR

}  // namespace s2v
