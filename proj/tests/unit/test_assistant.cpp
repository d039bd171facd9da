// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "httplib.h"
#include "thermotwin/error.hpp"

using namespace thermotwin;

namespace {

template <class F>
Errc code_of(F &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::ParseError;
}

bool has_flag(const Advisory &a, std::string_view code) {
  for (const auto &f : a.flags)
    if (f.code == code) return true;
  return false;
}

std::size_t count_flags(const Advisory &a, std::string_view code) {
  std::size_t n = 0;
  for (const auto &f : a.flags) n += f.code == code;
  return n;
}

// A reading with nothing to report: rod withdrawn, nothing energized.
SensorFrame quiet_frame() {
  SensorFrame f = fixtures::idle_reading();
  f.aux["Heater_V"] = 0.0;
  f.aux["Heater_I"] = 0.0;
  return f;
}

Advisory advise(const SensorFrame &f, const std::optional<TwinExpectation> &twin = std::nullopt) {
  return fallback_advise(f, compute_derived(f), twin);
}

// Local chat endpoint for the backend tests.
struct MockBackend {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  nlohmann::json last_request;
  std::atomic<int> status{200};
  std::atomic<int> delay_ms{0};

  MockBackend() {
    server.Post("/v1/chat/completions", [this](const httplib::Request &req, httplib::Response &res) {
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
      last_request = nlohmann::json::parse(req.body);
      res.status = status;
      const std::string echo = last_request["messages"][1]["content"];
      res.set_content(nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", echo}}}}}}}.dump(),
                      "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockBackend() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("derived metrics") {
  const SensorFrame f = fixtures::idle_reading();
  const DerivedMetrics zero = compute_derived(f, 0.0, 0.0);
  CHECK(zero.p_kw == 0.0);
  CHECK(zero.p_elec == 0.0);

  const DerivedMetrics d = compute_derived(f, 35.78, 0.72);
  CHECK(std::abs(d.p_kw - 0.0257616) < 1e-9);
  CHECK(std::abs(d.p_elec - 0.45 * 0.0257616) < 1e-9);
  CHECK(std::abs(d.avg_heater_temp - 26.65) < 1e-9);

  const DerivedMetrics from_frame = compute_derived(f);
  CHECK(from_frame.p_kw == d.p_kw);
  CHECK(code_of([&] { compute_derived(f, -1.0, 0.5); }) == Errc::OutOfRange);

  SensorFrame missing = f;
  missing.values.erase("TH3");
  CHECK(code_of([&] { compute_derived(missing, 1.0, 1.0); }) == Errc::MissingChannel);
}

TEST_CASE("facility block matches the golden file byte for byte") {
  const std::string golden = fixtures::read_text(THERMOTWIN_GOLDEN_DIR "/facility_block.txt");
  REQUIRE_FALSE(golden.empty());
  const SensorFrame f = fixtures::idle_reading();
  CHECK(render_facility_block(f) == golden);
  CHECK(render_facility_block(f) == render_facility_block(f));
}

TEST_CASE("context sections, twin block and completeness") {
  const SensorFrame f = fixtures::idle_reading();
  const std::string plain = build_context(f, compute_derived(f)).text;
  CHECK(plain.rfind(render_facility_block(f), 0) == 0);
  CHECK(plain.find("Digital Twin") == std::string::npos);

  const auto twin = fixtures::demand_expectation();
  const std::string text = build_context(f, compute_derived(f), twin).text;
  CHECK(text.find("Digital Twin's Expectation Data for User's Demand Power: 1.89 kW\n") !=
        std::string::npos);
  CHECK(text.find("- Expected Total Power: 5.33 kW (34.0%)\n") != std::string::npos);
  CHECK(text.find("- Expected Control Rod Position: 65.91%\n") != std::string::npos);
  CHECK(text.find("Digital Twin Expectation for Four Heater Temperature in Test Section: 89.63°C, "
                  "89.52°C, 89.95°C, 90.19°C\n") != std::string::npos);

  // Section order.
  const char *order[] = {"Total Heater Voltage", "Control Rod Position", "Primary Loop",
                         "Secondary Loop",       "Four Heater",          "Heat Sink Loop",
                         "Gauge Pressure",       "Flow Rate"};
  std::size_t at = 0;
  for (const char *key : order) {
    const auto pos = plain.find(key, at);
    REQUIRE(pos != std::string::npos);
    at = pos;
  }

  // Every catalog channel is rendered once: distinct values make each one findable.
  // Quadratic spacing keeps the heater average off every marker.
  SensorFrame marked = f;
  double k = 0.0;
  auto next = [&] { return 1000.0 + 7.0 * (k += 1.0) * k; };
  for (auto &[id, val] : marked.values) val = next();
  for (auto &[id, val] : marked.actuators) val = next();
  marked.demand_elec = next();
  const std::string ctx = build_context(marked, compute_derived(marked)).text;
  auto occurrences = [&](const std::string &needle) {
    std::size_t n = 0;
    for (auto p = ctx.find(needle); p != std::string::npos; p = ctx.find(needle, p + 1)) ++n;
    return n;
  };
  for (const auto &spec : canonical_catalog().channels()) {
    const double x = marked.value(spec.id);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f.", x);
    CAPTURE(spec.id);
    CHECK(occurrences(buf) == 1);
  }
}

TEST_CASE("prompt assembly") {
  const SensorFrame f = fixtures::idle_reading();
  const FacilityContext ctx = build_context(f, compute_derived(f));
  const std::string q = "Is it safe to raise the demand to 1.889 kW?";
  const Prompt p = augment_query(q, ctx);
  const std::string text = p.text();
  CHECK(text.find("80") != std::string::npos);
  CHECK(text.find("200") != std::string::npos);
  CHECK(text.size() >= q.size());
  CHECK(text.compare(text.size() - q.size(), q.size(), q) == 0);
  CHECK(text.size() == system_preamble().size() + ctx.text.size() + q.size() + 2 * 2 +
                           std::string(Prompt::kQueryLabel).size());
  CHECK(text.find(system_preamble()) == 0);
  CHECK(code_of([&] { augment_query("   \n", ctx); }) == Errc::EmptyQuery);
  CHECK(code_of([&] { augment_query("", ctx); }) == Errc::EmptyQuery);
}

TEST_CASE("chat request carries model and temperature") {
  const SensorFrame f = fixtures::idle_reading();
  const Prompt p = augment_query("status?", build_context(f, compute_derived(f)));
  const auto j = chat_request(p, BackendConfig{});
  CHECK(j["temperature"] == 0.3);
  CHECK(j["model"] == "gpt-4o");
  CHECK(j["messages"][0]["role"] == "system");
  CHECK(j["messages"][1]["role"] == "user");
}

TEST_CASE("rule: loop temperature above 80 degC is an alarm") {
  SensorFrame f = quiet_frame();
  CHECK_FALSE(has_flag(advise(f), "loop_temp_limit"));
  f.values["TF12"] = 80.0;
  CHECK_FALSE(has_flag(advise(f), "loop_temp_limit"));
  f.values["TF12"] = 85.0;
  const Advisory a = advise(f);
  REQUIRE(count_flags(a, "loop_temp_limit") == 1);
  const auto &flag = a.flags.front();
  CHECK(flag.severity == Severity::Alarm);
  CHECK(flag.channel == "TF12");
  CHECK(flag.limit == 80.0);
  CHECK(a.safe_to_proceed == Verdict::No);
  CHECK(a.render().find("80") != std::string::npos);
}

TEST_CASE("rule: heater temperature above 200 degC is an alarm") {
  SensorFrame f = quiet_frame();
  f.values["TH3"] = 200.0;
  CHECK_FALSE(has_flag(advise(f), "heater_temp_limit"));
  f.values["TH3"] = 230.5;
  const Advisory a = advise(f);
  REQUIRE(count_flags(a, "heater_temp_limit") == 1);
  CHECK(a.flags.front().channel == "TH3");
  CHECK(a.flags.front().limit == 200.0);
  CHECK(a.safe_to_proceed == Verdict::No);
  // A heater at 150 degC is inside its own limit even though it exceeds the loop limit.
  f.values["TH3"] = 150.0;
  CHECK(advise(f).flags.empty());
}

TEST_CASE("rule: negative flow is a warning") {
  SensorFrame f = quiet_frame();
  f.values["FT2"] = -0.01;
  const Advisory a = advise(f);
  REQUIRE(count_flags(a, "negative_flow") == 1);
  CHECK(a.flags.front().severity == Severity::Warning);
  CHECK(a.flags.front().message.find("negative flow rate") != std::string::npos);
  CHECK(a.safe_to_proceed == Verdict::Conditional);
  f.values["FT2"] = 0.0;
  CHECK_FALSE(has_flag(advise(f), "negative_flow"));
}

TEST_CASE("rule: heat-exchanger temperature inversion is a warning") {
  SensorFrame f = quiet_frame();
  const AdvisorLimits limits;
  // Within sensor noise: not an inversion.
  f.values["TF22"] = f.values["TF14"] + limits.inversion_margin;
  CHECK_FALSE(has_flag(advise(f), "temperature_inversion"));
  f.values["TF22"] = f.values["TF14"] + limits.inversion_margin + 0.5;
  Advisory a = advise(f);
  REQUIRE(count_flags(a, "temperature_inversion") == 1);
  CHECK(a.flags.front().channel == "TF22");
  CHECK(a.flags.front().severity == Severity::Warning);

  SensorFrame g = quiet_frame();
  g.values["TF32"] = g.values["TF24"] + 6.0;
  a = advise(g);
  REQUIRE(count_flags(a, "temperature_inversion") == 1);
  CHECK(a.flags.front().channel == "TF32");

  // With a zero margin any excess of the cold outlet over the hot inlet fires.
  SensorFrame h = quiet_frame();
  h.values["TF22"] = h.values["TF14"] + 0.01;
  AdvisorLimits strict;
  strict.inversion_margin = 0.0;
  CHECK(has_flag(fallback_advise(h, compute_derived(h), std::nullopt, strict), "temperature_inversion"));
}

TEST_CASE("rule: rod fully inserted with electrical readings is info") {
  const SensorFrame f = fixtures::idle_reading();
  const Advisory a = advise(f);
  REQUIRE(a.flags.size() == 1);
  CHECK(a.flags.front().code == "rod_inserted_with_power");
  CHECK(a.flags.front().severity == Severity::Info);
  CHECK(a.flags.front().message.find("rod fully inserted, zero power despite electrical readings") == 0);
  CHECK(a.safe_to_proceed == Verdict::Conditional);

  CHECK(advise(quiet_frame()).flags.empty());
  CHECK(advise(quiet_frame()).safe_to_proceed == Verdict::Yes);
  SensorFrame withdrawn = f;
  withdrawn.aux["CR_Pos"] = 60.0;
  CHECK_FALSE(has_flag(advise(withdrawn), "rod_inserted_with_power"));
}

TEST_CASE("demand increase recommends stepwise actuation") {
  const Advisory a = advise(quiet_frame(), fixtures::demand_expectation());
  CHECK(a.safe_to_proceed == Verdict::Conditional);
  REQUIRE_FALSE(a.recommendations.empty());
  CHECK(a.recommendations.front().find("5% increments with 30-second holds") != std::string::npos);
  const auto j = a.to_json();
  CHECK(j["safe_to_proceed"] == "conditional");
}

TEST_CASE("alarms are sound and monotone in temperature") {
  for (double t = 20.0; t < 260.0; t += 7.5) {
    SensorFrame f = quiet_frame();
    f.values["TF13"] = t;
    f.values["TH1"] = t;
    const Advisory a = advise(f);
    for (const auto &flag : a.flags) {
      if (flag.severity != Severity::Alarm) continue;
      REQUIRE(flag.limit.has_value());
      REQUIRE_FALSE(flag.channel.empty());
      CHECK(flag.value > *flag.limit);
      CHECK(f.value(flag.channel) == flag.value);
    }
    SensorFrame hotter = f;
    hotter.values["TF13"] = t + 5.0;
    hotter.values["TH1"] = t + 5.0;
    CHECK(count_flags(advise(hotter), "loop_temp_limit") >= count_flags(a, "loop_temp_limit"));
    CHECK(count_flags(advise(hotter), "heater_temp_limit") >= count_flags(a, "heater_temp_limit"));
  }
}

TEST_CASE("backend: mock echo, fallback and errors") {
  const SensorFrame f = fixtures::idle_reading();
  const Prompt p = augment_query("status?", build_context(f, compute_derived(f)));
  const auto fallback = [&] { return advise(f).render(); };
  MockBackend mock;

  BackendConfig cfg;
  cfg.base_url = mock.url();
  cfg.api_key = "test-key";
  const std::string reply = infer(p, cfg, fallback);
  CHECK(reply == p.context + Prompt::kSeparator + Prompt::kQueryLabel + p.query);
  CHECK(mock.last_request["temperature"] == 0.3);
  CHECK(mock.last_request["messages"][0]["content"] == system_preamble());

  SUBCASE("backend down falls back with a marker") {
    BackendConfig down = cfg;
    down.base_url = "http://127.0.0.1:1";
    const std::string r = infer(p, down, fallback);
    CHECK(r.rfind(kFallbackMarker, 0) == 0);
    CHECK(r.find("rod fully inserted") != std::string::npos);
    down.fallback_on_error = false;
    CHECK(code_of([&] { infer(p, down, fallback); }) == Errc::BackendUnavailable);
  }
  SUBCASE("server errors are bad responses") {
    mock.status = 500;
    CHECK(code_of([&] { infer(p, cfg, fallback); }) == Errc::BadResponse);
  }
  SUBCASE("slow backend times out") {
    mock.delay_ms = 1500;
    BackendConfig slow = cfg;
    slow.timeout_s = 0.3;
    slow.fallback_on_error = false;
    CHECK(code_of([&] { infer(p, slow, fallback); }) == Errc::Timeout);
    slow.fallback_on_error = true;
    CHECK(infer(p, slow, fallback).rfind(kFallbackMarker, 0) == 0);
  }
  SUBCASE("explicit fallback selection") {
    BackendConfig fb;
    fb.base_url = "fallback";
    CHECK(infer(p, fb, fallback) == std::string(kFallbackMarker) + "\n" + fallback());
  }
}
