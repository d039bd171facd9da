// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thermotwin {

/// Domain error codes shared across modules. The name of each code is what
/// the CLI and the telemetry protocol print.
enum class Errc {
  MissingChannel,
  SchemaMismatch,
  ParseError,
  InvalidConfig,
  OutOfRange,
  NonFinite,
  ShapeMismatch,
  StaleCache,
  VersionMismatch,
  CorruptFile,
  TooShort,
  Diverged,
  NonFinitePrediction,
  ColdStart,
  UnknownNode,
  AccessDenied,
  MalformedMessage,
  DeadlineMiss,
  EmptyQuery,
  BackendUnavailable,
  Timeout,
  BadResponse,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string &what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace thermotwin
