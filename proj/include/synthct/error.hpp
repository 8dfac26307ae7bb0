#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthct {

enum class ErrorKind {
  UnsupportedEncoding,
  MalformedInput,
  InvalidParameter,
  DegenerateDistribution,
  InsufficientSamples,
  NotPositiveSemidefinite,
  DegenerateBaseline,
  MissingFeature,
  DegenerateTable,
  IoError,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

/// Domain error raised by every toolkit operation. The message carries the
/// offending path, tag or field where one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace synthct
