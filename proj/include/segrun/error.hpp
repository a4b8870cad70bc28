#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segrun {

enum class Errc {
  InvalidArgument,
  IoError,
  UnsupportedDatatype,
  CorruptHeader,
  DimensionError,
  NanInData,
  NonBinaryMaskAsUint8,
  ExternalToolMissing,
  ExternalToolFailed,
  CacheCorruption,
  ShapeMismatch,
  DuplicateId,
  ParseError,
  NotFound,
  ChecksumMismatch,
  ManifestMismatch,
  BackendInitFailed,
  InferenceFailed,
  UnsupportedOperator,
  ThresholdOutOfRange,
  MissingInverseRecord,
  MniTransformMissing,
  PortInUse,
  Cancelled,
};

std::string_view to_string(Errc code);

/// Base exception for every failure surfaced by the library. The code
/// drives CLI exit-code mapping and HTTP status selection.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

class ExternalToolError : public Error {
public:
  ExternalToolError(int exit_code, std::string stderr_tail, const std::string& message)
      : Error(Errc::ExternalToolFailed, message),
        exit_code_(exit_code),
        stderr_tail_(std::move(stderr_tail)) {}

  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_tail() const noexcept { return stderr_tail_; }

private:
  int exit_code_;
  std::string stderr_tail_;
};

// Errors that stem from bad user input rather than a failed computation.
bool is_validation_error(Errc code);

}  // namespace segrun
