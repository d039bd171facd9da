// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/assistant.hpp"

#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>

#include "httplib.h"
#include "thermotwin/error.hpp"

namespace thermotwin {

namespace {

std::string format(const char *fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  const int n = std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return std::string(buf, static_cast<std::size_t>(std::max(0, std::min<int>(n, sizeof buf - 1))));
}

double reading(const SensorFrame &frame, std::string_view id) {
  if (auto it = frame.values.find(id); it != frame.values.end()) return it->second;
  if (auto it = frame.actuators.find(id); it != frame.actuators.end()) return it->second;
  if (auto it = frame.aux.find(id); it != frame.aux.end()) return it->second;
  throw Error(Errc::MissingChannel, std::string(id));
}

struct Group {
  const char *title;
  bool labelled;  // bracketed location list after the title
  std::vector<const char *> ids;
  const char *value_fmt;
};

const std::array<Group, 6> &groups() {
  static const std::array<Group, 6> g = {{
      {"Primary Loop Temperatures", true, {"TF11", "TF12", "TF13", "TF14", "TF15"}, "%.2f°C"},
      {"Secondary Loop Temperatures", true, {"TF21", "TF22", "TF23", "TF24", "TF25"}, "%.2f°C"},
      {"Four Heater Temperature in Test Section", false, {"TH1", "TH2", "TH3", "TH4"}, "%.2f°C"},
      {"Heat Sink Loop Temperatures", true, {"TF31", "TF32"}, "%.2f°C"},
      {"Gauge Pressure", true, {"PT1", "PT2", "PT3", "PT4"}, "%.2f kPa"},
      {"Flow Rate", true, {"FT1", "FT2", "FT3"}, "%.4f kg/s"},
  }};
  return g;
}

std::string group_line(const Group &g, const SensorFrame &frame, const char *prefix) {
  const auto &cat = canonical_catalog();
  std::string line = std::string("- ") + prefix + g.title;
  if (g.labelled) {
    line += " [";
    for (std::size_t i = 0; i < g.ids.size(); ++i) {
      if (i) line += ", ";
      line += cat.at(g.ids[i]).label;
    }
    line += ']';
  }
  line += ": ";
  for (std::size_t i = 0; i < g.ids.size(); ++i) {
    if (i) line += ", ";
    line += format(g.value_fmt, reading(frame, g.ids[i]));
  }
  return line + '\n';
}

double power_percent(double kw) {
  return kw / canonical_catalog().at("Heat_Power").max_value * 100.0;
}

double rod_position(const SensorFrame &frame) {
  if (auto it = frame.aux.find("CR_Pos"); it != frame.aux.end()) return it->second;
  return reading(frame, "CR_AO");
}

}  // namespace

DerivedMetrics compute_derived(const SensorFrame &frame, double voltage, double current) {
  if (!(voltage >= 0.0) || !(current >= 0.0))
    throw Error(Errc::OutOfRange, "voltage and current must be >= 0");
  DerivedMetrics d;
  d.p_kw = voltage * current / 1000.0;
  d.p_elec = d.p_kw * 0.45;
  d.avg_heater_temp = (reading(frame, "TH1") + reading(frame, "TH2") + reading(frame, "TH3") +
                       reading(frame, "TH4")) /
                      4.0;
  return d;
}

DerivedMetrics compute_derived(const SensorFrame &frame) {
  return compute_derived(frame, std::max(0.0, reading(frame, "Heater_V")),
                         std::max(0.0, reading(frame, "Heater_I")));
}

std::string render_facility_block(const SensorFrame &frame) {
  const double power = reading(frame, "Heat_Power");
  std::string s = "Current Facility Data:\n";
  s += format("- Total Heater Voltage: %.2f V\n", reading(frame, "Heater_V"));
  s += format("- Total Heater Current: %.2f A\n", reading(frame, "Heater_I"));
  s += format("- Total Power: %.2f kW (%.1f%%)\n", power, power_percent(power));
  s += format("- Control Rod Position: %.2f%%\n", rod_position(frame));
  for (const auto &g : groups()) s += group_line(g, frame, "");
  return s;
}

std::string render_twin_block(const TwinExpectation &twin) {
  const auto &f = twin.frame;
  const double power = reading(f, "Heat_Power");
  std::string s =
      format("Digital Twin's Expectation Data for User's Demand Power: %.2f kW\n", twin.demand_kw);
  s += format("- Expected Total Power: %.2f kW (%.1f%%)\n", power, power_percent(power));
  s += format("- Expected Control Rod Position: %.2f%%\n", reading(f, "CR_AO"));
  for (const auto &g : groups()) s += group_line(g, f, "Digital Twin Expectation for ");
  return s;
}

FacilityContext build_context(const SensorFrame &frame, const DerivedMetrics &derived,
                              const std::optional<TwinExpectation> &twin) {
  std::string s = render_facility_block(frame);
  s += "\nAdditional Facility Data:\n";
  s += format("- Computed Heater Power (V x I): %.2f kW\n", derived.p_kw);
  s += format("- Estimated Electric Output (45%% conversion): %.2f kW\n", derived.p_elec);
  s += format("- Average Heater Temperature: %.2f°C\n", derived.avg_heater_temp);
  s += format("- Actuator Commands [Heater, Pump 1, Pump 2, Control Rod]: %.1f%%, %.1f Hz, "
              "%.1f Hz, %.2f%%\n",
              reading(frame, "Heater_AO"), reading(frame, "Pump1_AO"), reading(frame, "Pump2_AO"),
              reading(frame, "CR_AO"));
  s += format("- Generated Electric Power: %.2f kW\n", reading(frame, "Elec_Power"));
  s += format("- Electric Power Demand: %.2f kW\n", frame.demand_elec);
  s += format("- Timestamp: %.1f s\n", frame.t);
  if (twin) s += '\n' + render_twin_block(*twin);
  return {s};
}

const std::string &system_preamble() {
  static const std::string text =
      "You are an operations assistant for a three-loop thermal-fluid test facility. "
      "A primary water loop carries heat from four electric heater rods in the test section "
      "through a first heat exchanger into a secondary loop, which rejects it through a second "
      "heat exchanger into a once-through heat-sink loop. Heater power is trimmed by a "
      "control rod (100% = fully inserted, zero power), and the two pump frequencies set the "
      "primary and secondary flow rates. Electric output is modelled as 45% of heating power.\n"
      "Operational limits: coolant loop temperatures must stay below 80°C and heater element "
      "temperatures below 200°C.\n"
      "Values prefixed dt_ or listed under the Digital Twin's expectation are predictions, "
      "not measurements.\n"
      "Safety takes priority over throughput. Flag inconsistent readings, recommend stepwise "
      "changes (5% increments with 30-second holds) and ask for more information rather than "
      "guessing when data are ambiguous.";
  return text;
}

std::string Prompt::text() const {
  return system + kSeparator + context + kSeparator + kQueryLabel + query;
}

Prompt augment_query(const std::string &query, const FacilityContext &context) {
  if (query.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(Errc::EmptyQuery, "the question is empty");
  return {system_preamble(), context.text, query};
}

BackendConfig BackendConfig::from_env() {
  BackendConfig c;
  if (const char *v = std::getenv("ASSISTANT_BASE_URL")) c.base_url = v;
  if (const char *v = std::getenv("ASSISTANT_API_KEY")) c.api_key = v;
  if (const char *v = std::getenv("ASSISTANT_MODEL"); v && *v) c.model = v;
  return c;
}

nlohmann::json chat_request(const Prompt &prompt, const BackendConfig &backend) {
  return {{"model", backend.model},
          {"temperature", backend.temperature},
          {"messages",
           {{{"role", "system"}, {"content", prompt.system}},
            {{"role", "user"},
             {"content", prompt.context + Prompt::kSeparator + Prompt::kQueryLabel +
                             prompt.query}}}}};
}

namespace {

std::string call_backend(const Prompt &prompt, const BackendConfig &backend) {
  // base_url is scheme://host[:port][/prefix]; the chat route is appended.
  const auto scheme_end = backend.base_url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::BackendUnavailable, "base URL lacks a scheme: " + backend.base_url);
  const auto path_start = backend.base_url.find('/', scheme_end + 3);
  const std::string origin = backend.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : backend.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.empty()) prefix = "/v1";

  httplib::Client client(origin);
  if (!client.is_valid()) throw Error(Errc::BackendUnavailable, "unsupported URL: " + origin);
  const auto secs = static_cast<time_t>(backend.timeout_s);
  const auto usecs = static_cast<time_t>((backend.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!backend.api_key.empty()) headers.emplace("Authorization", "Bearer " + backend.api_key);

  const auto res = client.Post(prefix + "/chat/completions", headers,
                               chat_request(prompt, backend).dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write)
      throw Error(Errc::Timeout, httplib::to_string(res.error()));
    throw Error(Errc::BackendUnavailable, httplib::to_string(res.error()));
  }
  if (res->status != 200)
    throw Error(Errc::BadResponse, "HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(Errc::BadResponse, e.what());
  }
}

}  // namespace

std::string infer(const Prompt &prompt, const BackendConfig &backend,
                  const std::function<std::string()> &fallback) {
  if (backend.is_fallback()) {
    if (!fallback) throw Error(Errc::BackendUnavailable, "no backend configured");
    return std::string(kFallbackMarker) + '\n' + fallback();
  }
  try {
    return call_backend(prompt, backend);
  } catch (const Error &e) {
    const bool transport = e.code() == Errc::BackendUnavailable || e.code() == Errc::Timeout;
    if (!transport || !backend.fallback_on_error || !fallback) throw;
    return std::string(kFallbackMarker) + '\n' + fallback();
  }
}

// ---------------------------------------------------------------------------
// Rule-based advisor

std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Alarm: return "alarm";
  }
  return "info";
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Conditional: return "conditional";
  }
  return "conditional";
}

Advisory fallback_advise(const SensorFrame &frame, const DerivedMetrics &derived,
                         const std::optional<TwinExpectation> &twin,
                         const AdvisorLimits &limits) {
  (void)derived;
  Advisory a;
  static const char *loop_ids[] = {"TF11", "TF12", "TF13", "TF14", "TF15", "TF21",
                                   "TF22", "TF23", "TF24", "TF25", "TF31", "TF32"};
  for (const char *id : loop_ids) {
    const double v = reading(frame, id);
    if (v > limits.loop_temp)
      a.flags.push_back({"loop_temp_limit", Severity::Alarm,
                         format("%s at %.2f°C exceeds the %.0f°C coolant loop limit", id, v,
                                limits.loop_temp),
                         id, v, limits.loop_temp});
  }
  for (const char *id : {"TH1", "TH2", "TH3", "TH4"}) {
    const double v = reading(frame, id);
    if (v > limits.heater_temp)
      a.flags.push_back({"heater_temp_limit", Severity::Alarm,
                         format("%s at %.2f°C exceeds the %.0f°C heater element limit", id, v,
                                limits.heater_temp),
                         id, v, limits.heater_temp});
  }
  for (const char *id : {"FT1", "FT2", "FT3"}) {
    const double v = reading(frame, id);
    if (v < 0.0)
      a.flags.push_back({"negative_flow", Severity::Warning,
                         format("negative flow rate on %s (%.4f kg/s)", id, v), id, v, 0.0});
  }
  struct Exchanger {
    const char *name, *hot_in, *cold_out;
  };
  for (const Exchanger &hx : {Exchanger{"1st HX", "TF14", "TF22"},
                              Exchanger{"2nd HX", "TF24", "TF32"}}) {
    const double hot = reading(frame, hx.hot_in);
    const double cold = reading(frame, hx.cold_out);
    if (cold > hot + limits.inversion_margin)
      a.flags.push_back({"temperature_inversion", Severity::Warning,
                         format("%s temperature inversion: cold outlet %s %.2f°C above hot "
                                "inlet %s %.2f°C",
                                hx.name, hx.cold_out, cold, hx.hot_in, hot),
                         hx.cold_out, cold, hot + limits.inversion_margin});
  }
  const double rod = rod_position(frame);
  const double volts = reading(frame, "Heater_V");
  const double amps = reading(frame, "Heater_I");
  if (rod >= limits.rod_inserted && (volts > 0.0 || amps > 0.0))
    a.flags.push_back({"rod_inserted_with_power", Severity::Info,
                       format("rod fully inserted, zero power despite electrical readings "
                              "(%.2f V, %.2f A)",
                              volts, amps),
                       "CR_Pos", rod, limits.rod_inserted});

  bool alarm = false, caution = false;
  for (const auto &f : a.flags) {
    alarm |= f.severity == Severity::Alarm;
    caution |= f.severity != Severity::Alarm;
  }
  if (alarm) a.recommendations.push_back("Reduce heater power and hold until every alarm clears.");
  if (twin && twin->demand_kw > frame.demand_elec) {
    caution = true;
    a.recommendations.push_back(format(
        "Raise toward the %.2f kW demand stepwise: withdraw the rod or raise the heater in 5%% "
        "increments with 30-second holds, confirming temperatures against the twin "
        "expectation after each step.",
        twin->demand_kw));
  }
  if (caution && !alarm)
    a.recommendations.push_back("Verify the flagged readings before changing actuators.");
  a.safe_to_proceed = alarm ? Verdict::No : caution ? Verdict::Conditional : Verdict::Yes;
  return a;
}

nlohmann::json Advisory::to_json() const {
  nlohmann::json flags_json = nlohmann::json::array();
  for (const auto &f : flags) {
    nlohmann::json j = {{"code", f.code},
                        {"severity", severity_name(f.severity)},
                        {"message", f.message},
                        {"channel", f.channel},
                        {"value", f.value}};
    j["limit"] = f.limit ? nlohmann::json(*f.limit) : nlohmann::json(nullptr);
    flags_json.push_back(std::move(j));
  }
  return {{"flags", flags_json},
          {"recommendations", recommendations},
          {"safe_to_proceed", verdict_name(safe_to_proceed)}};
}

std::string Advisory::render() const {
  std::string s = "Safe to proceed: " + std::string(verdict_name(safe_to_proceed)) + '\n';
  if (flags.empty()) s += "No flags raised.\n";
  for (const auto &f : flags) {
    s += '[' + std::string(severity_name(f.severity)) + "] " + f.message;
    if (f.limit) s += format(" (limit %.2f)", *f.limit);
    s += '\n';
  }
  for (std::size_t i = 0; i < recommendations.size(); ++i)
    s += std::to_string(i + 1) + ". " + recommendations[i] + '\n';
  return s;
}

}  // namespace thermotwin
