// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <thread>

#include "httplib.h"
#include "thermotwin/gateway.hpp"

using namespace thermotwin;
using nlohmann::json;

namespace {

struct Rig {
  PlantConfig config;
  Namespace ns;
  PlantDriver plant;
  Gateway gateway;
  httplib::Client client;

  explicit Rig(const TwinDriver *twin = nullptr)
      : plant(ns, config, idle_state(config), {20.0, false, 0, 600}),
        gateway(ns, &plant, twin, BackendConfig{}),
        client("127.0.0.1", start_port()) {
    client.set_read_timeout(10, 0);
  }

  int start_port() {
    plant.start();
    gateway.start("127.0.0.1", 0);
    return gateway.port();
  }

  json post(const std::string &path, const json &body, int expect = 200) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }
};

GruModel tiny_model() {
  GruModel m = make_model({kInputDim, 8, 1, 30, 10, kOutputDim}, 11);
  m.norm.in_mean.assign(kInputDim, 30.0);
  m.norm.in_std.assign(kInputDim, 5.0);
  m.norm.out_mean.assign(kOutputDim, 30.0);
  m.norm.out_std.assign(kOutputDim, 5.0);
  return m;
}

}  // namespace

TEST_CASE("state snapshot") {
  Rig rig;
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  auto res = rig.client.Get("/api/state");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json j = json::parse(res->body);
  CHECK(j["paused"] == false);
  for (const auto &spec : canonical_catalog().channels()) CHECK(j["nodes"].contains(spec.id));
  CHECK(j["nodes"]["TF11"]["quality"] == "good");
}

TEST_CASE("commands write through to the plant") {
  Rig rig;
  CHECK(rig.post("/api/command", {{"node", "Pump1_AO"}, {"value", 40.0}})["ok"] == true);
  CHECK(rig.ns.commands().pump1_ao == 40.0);
  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  CHECK(rig.plant.state().applied.pump1_ao == doctest::Approx(40.0));

  CHECK(rig.post("/api/command", {{"node", "Heater_AO"}, {"value", 150.0}}, 400)["err"] ==
        "OutOfRange");
  CHECK(rig.post("/api/command", {{"node", "TF11"}, {"value", 1.0}}, 400)["err"] == "AccessDenied");
  CHECK(rig.post("/api/command", {{"node", "TF11"}}, 400)["err"] == "MalformedMessage");
  CHECK(rig.post("/api/command", {{"action", "jump"}}, 400)["err"] == "MalformedMessage");
  auto res = rig.client.Post("/api/command", "{oops", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
}

TEST_CASE("pause and resume") {
  Rig rig;
  CHECK(rig.post("/api/command", {{"action", "pause"}})["ok"] == true);
  CHECK(rig.plant.paused());
  auto state = json::parse(rig.client.Get("/api/state")->body);
  CHECK(state["paused"] == true);
  const double t0 = rig.plant.state().t;
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  CHECK(rig.plant.state().t == t0);
  CHECK(rig.post("/api/command", {{"action", "resume"}})["ok"] == true);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  CHECK(rig.plant.state().t > t0);
}

TEST_CASE("assist falls back to the rule-based advisor") {
  Rig rig;
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  const json j = rig.post("/api/assist", {{"query", "Is the facility healthy?"}});
  CHECK(j["ok"] == true);
  CHECK(j["fallback"] == true);
  CHECK(j["response"].get<std::string>().rfind(kFallbackMarker, 0) == 0);
  CHECK(j["advisory"].is_object());
  CHECK(rig.post("/api/assist", {{"query", "   "}}, 400)["err"] == "EmptyQuery");
  CHECK(rig.post("/api/assist", json::object(), 400)["err"] == "EmptyQuery");
}

TEST_CASE("event stream delivers snapshots") {
  Rig rig;
  int events = 0;
  std::string buffer;
  auto res = rig.client.Get("/api/stream", [&](const char *data, std::size_t n) {
    buffer.append(data, n);
    std::size_t pos;
    while ((pos = buffer.find("\n\n")) != std::string::npos) {
      const std::string ev = buffer.substr(0, pos);
      buffer.erase(0, pos + 2);
      REQUIRE(ev.rfind("data: ", 0) == 0);
      const json j = json::parse(ev.substr(6));
      CHECK(j["nodes"].contains("FT1"));
      ++events;
    }
    return events < 2;
  });
  CHECK(events == 2);
}

TEST_CASE("twin driver publishes expectations") {
  PlantConfig config;
  Namespace ns;
  PlantDriver plant(ns, config, idle_state(config), {50.0, false, 0, 600});
  TwinDriver::Options opt;
  opt.refresh_s = 3600.0;
  opt.rollout = {40, 1e-3, 30};
  TwinDriver twin(ns, plant, tiny_model(), opt);
  CHECK_FALSE(twin.refresh());  // no history yet
  CHECK_FALSE(twin.expectation());
  plant.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(1200));
  REQUIRE(twin.refresh());
  const auto e = twin.expectation();
  REQUIRE(e);
  CHECK(ns.read("dt_TF12", monotonic_ms()).quality != Quality::Bad);
  CHECK(ns.read("dt_TF12", monotonic_ms()).value == e->frame.value("TF12"));
  plant.stop();
}
