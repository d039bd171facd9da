// SPDX-License-Identifier: Apache-2.0
//
// Operator assistant: derived metrics, the facility context handed to a chat
// model, the chat backend client and a rule-based advisor used when no
// backend is reachable.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "thermotwin/channels.hpp"

namespace thermotwin {

struct DerivedMetrics {
  double p_kw = 0.0;    // V * I / 1000
  double p_elec = 0.0;  // 0.45 * p_kw
  double avg_heater_temp = 0.0;
};

DerivedMetrics compute_derived(const SensorFrame &frame, double voltage, double current);
/// Uses the frame's Heater_V and Heater_I readings.
DerivedMetrics compute_derived(const SensorFrame &frame);

/// Steady-state values the twin expects for a requested demand.
struct TwinExpectation {
  double demand_kw = 0.0;
  SensorFrame frame;  // 25 measured channels and the 4 actuators
};

/// The "Current Facility Data" block, one line per group.
std::string render_facility_block(const SensorFrame &frame);
std::string render_twin_block(const TwinExpectation &twin);

struct FacilityContext {
  std::string text;
};

FacilityContext build_context(const SensorFrame &frame, const DerivedMetrics &derived,
                              const std::optional<TwinExpectation> &twin = std::nullopt);

struct Prompt {
  std::string system;
  std::string context;
  std::string query;

  static constexpr const char *kSeparator = "\n\n";
  static constexpr const char *kQueryLabel = "User's Question: ";
  std::string text() const;
};

const std::string &system_preamble();
Prompt augment_query(const std::string &query, const FacilityContext &context);

struct BackendConfig {
  std::string base_url;  // empty or "fallback" selects the rule-based advisor
  std::string api_key;
  std::string model = "gpt-4o";
  double temperature = 0.3;
  double timeout_s = 60.0;
  bool fallback_on_error = true;

  bool is_fallback() const { return base_url.empty() || base_url == "fallback"; }
  /// ASSISTANT_BASE_URL, ASSISTANT_API_KEY, ASSISTANT_MODEL.
  static BackendConfig from_env();
};

/// Request body sent to a chat-completion endpoint.
nlohmann::json chat_request(const Prompt &prompt, const BackendConfig &backend);

/// Calls the backend and returns the reply verbatim. On transport failure
/// with fallback enabled, returns `fallback()` prefixed with a marker line.
std::string infer(const Prompt &prompt, const BackendConfig &backend,
                  const std::function<std::string()> &fallback = {});

inline constexpr const char *kFallbackMarker = "[fallback advisory]";

enum class Severity { Info, Warning, Alarm };
enum class Verdict { Yes, No, Conditional };

struct AdvisoryFlag {
  std::string code;
  Severity severity = Severity::Info;
  std::string message;
  std::string channel;
  double value = 0.0;
  std::optional<double> limit;
};

struct Advisory {
  std::vector<AdvisoryFlag> flags;
  std::vector<std::string> recommendations;
  Verdict safe_to_proceed = Verdict::Yes;

  nlohmann::json to_json() const;
  std::string render() const;
};

struct AdvisorLimits {
  double loop_temp = 80.0;     // degC
  double heater_temp = 200.0;  // degC
  double inversion_margin = 4.5;  // degC, 3 sigma of the difference of two thermocouples
  double rod_inserted = 99.9;  // % inserted
};

Advisory fallback_advise(const SensorFrame &frame, const DerivedMetrics &derived,
                         const std::optional<TwinExpectation> &twin = std::nullopt,
                         const AdvisorLimits &limits = {});

std::string_view severity_name(Severity s);
std::string_view verdict_name(Verdict v);

}  // namespace thermotwin
