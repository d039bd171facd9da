// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/error.hpp"

namespace thermotwin {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingChannel: return "MissingChannel";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleCache: return "StaleCache";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::TooShort: return "TooShort";
    case Errc::Diverged: return "Diverged";
    case Errc::NonFinitePrediction: return "NonFinitePrediction";
    case Errc::ColdStart: return "ColdStart";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::AccessDenied: return "AccessDenied";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::DeadlineMiss: return "DeadlineMiss";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::Timeout: return "Timeout";
    case Errc::BadResponse: return "BadResponse";
  }
  return "Unknown";
}

}  // namespace thermotwin
