#include "synthct/error.hpp"

namespace synthct {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
    case ErrorKind::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorKind::MissingFeature: return "MissingFeature";
    case ErrorKind::DegenerateTable: return "DegenerateTable";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace synthct
