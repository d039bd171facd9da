// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/gateway.hpp"

#include <chrono>
#include <iostream>

#include "httplib.h"
#include "thermotwin/error.hpp"

namespace thermotwin {

TwinDriver::TwinDriver(Namespace &ns, const PlantDriver &plant, const GruModel &model,
                       Options options)
    : ns_(ns), plant_(plant), engine_(model), options_(options) {}

TwinDriver::~TwinDriver() { stop(); }

void TwinDriver::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { loop(); });
}

void TwinDriver::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
}

bool TwinDriver::refresh() {
  const Trajectory history = plant_.history();
  if (history.size() < engine_.dims().input_steps) return false;
  const double demand = ns_.demand();
  const RolloutResult r =
      rollout(engine_, history_window(history, engine_.dims().input_steps), demand,
              options_.rollout);
  if (r.trajectory.empty()) return false;
  ns_.publish_twin(r.trajectory.back(), monotonic_ms());
  std::lock_guard lock(mutex_);
  latest_ = TwinExpectation{demand, r.trajectory.back()};
  return true;
}

std::optional<TwinExpectation> TwinDriver::expectation() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

void TwinDriver::loop() {
  using clock = std::chrono::steady_clock;
  auto last = clock::now() - std::chrono::hours(1);
  double last_demand = -1.0;
  while (running_) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    const double demand = ns_.demand();
    const bool due = clock::now() - last > std::chrono::duration<double>(options_.refresh_s);
    if (!due && demand == last_demand) continue;
    try {
      if (refresh()) {
        last = clock::now();
        last_demand = demand;
      }
    } catch (const Error &e) {
      std::cerr << "twin: " << e.what() << '\n';
      last = clock::now();
      last_demand = demand;
    }
  }
}

// ---------------------------------------------------------------------------

struct Gateway::Impl {
  Namespace &ns;
  PlantDriver *plant;
  const TwinDriver *twin;
  BackendConfig backend;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> running{false};

  Impl(Namespace &n, PlantDriver *p, const TwinDriver *t, BackendConfig b)
      : ns(n), plant(p), twin(t), backend(std::move(b)) {}
};

namespace {

void reply_json(httplib::Response &res, const nlohmann::json &j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

nlohmann::json error_json(const Error &e) {
  return {{"ok", false}, {"err", errc_name(e.code())}, {"detail", e.what()}};
}

}  // namespace

Gateway::Gateway(Namespace &ns, PlantDriver *plant, const TwinDriver *twin, BackendConfig backend)
    : impl_(std::make_unique<Impl>(ns, plant, twin, std::move(backend))) {
  Impl &im = *impl_;

  im.server.Get("/api/state", [&im](const httplib::Request &, httplib::Response &res) {
    reply_json(res, {{"t", monotonic_ms()},
                     {"paused", im.plant && im.plant->paused()},
                     {"nodes", im.ns.snapshot(monotonic_ms())}});
  });

  im.server.Get("/api/stream", [&im](const httplib::Request &, httplib::Response &res) {
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [&im](std::size_t, httplib::DataSink &sink) {
          if (!im.running) return false;
          const auto now = monotonic_ms();
          const nlohmann::json body = {{"t", now}, {"nodes", im.ns.snapshot(now)}};
          const std::string event = "data: " + body.dump() + "\n\n";
          if (!sink.write(event.data(), event.size())) return false;
          for (int i = 0; i < 10 && im.running; ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
          return im.running.load();
        });
  });

  im.server.Post("/api/command", [&im](const httplib::Request &req, httplib::Response &res) {
    try {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception &) {
        throw Error(Errc::MalformedMessage, "body is not JSON");
      }
      if (body.contains("action")) {
        const std::string action = body.value("action", "");
        if (!im.plant) throw Error(Errc::AccessDenied, "no plant attached");
        if (action == "pause") im.plant->pause();
        else if (action == "resume") im.plant->resume();
        else throw Error(Errc::MalformedMessage, "unknown action " + action);
        return reply_json(res, {{"ok", true}});
      }
      if (!body.contains("node") || !body["node"].is_string() || !body.contains("value") ||
          !body["value"].is_number())
        throw Error(Errc::MalformedMessage, "command needs a node and a numeric value");
      im.ns.write(body["node"].get<std::string>(), body["value"].get<double>());
      reply_json(res, {{"ok", true}});
    } catch (const Error &e) {
      reply_json(res, error_json(e), 400);
    }
  });

  im.server.Post("/api/assist", [&im](const httplib::Request &req, httplib::Response &res) {
    try {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception &) {
        throw Error(Errc::MalformedMessage, "body is not JSON");
      }
      const std::string query = body.value("query", "");
      const SensorFrame frame = im.ns.frame();
      const DerivedMetrics derived = compute_derived(frame);
      const auto twin = im.twin ? im.twin->expectation() : std::nullopt;
      const Prompt prompt = augment_query(query, build_context(frame, derived, twin));
      const Advisory advisory = fallback_advise(frame, derived, twin);
      const std::string text =
          infer(prompt, im.backend, [&] { return advisory.render(); });
      reply_json(res, {{"ok", true},
                       {"response", text},
                       {"fallback", text.rfind(kFallbackMarker, 0) == 0},
                       {"advisory", advisory.to_json()}});
    } catch (const Error &e) {
      reply_json(res, error_json(e), e.code() == Errc::EmptyQuery ? 400 : 502);
    }
  });
}

Gateway::~Gateway() { stop(); }

void Gateway::start(const std::string &host, int port) {
  Impl &im = *impl_;
  if (port == 0) {
    port_ = im.server.bind_to_any_port(host);
  } else if (im.server.bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw Error(Errc::InvalidConfig, "cannot bind HTTP gateway on port " +
                                                       std::to_string(port));
  im.running = true;
  im.thread = std::thread([&im] { im.server.listen_after_bind(); });
}

void Gateway::stop() {
  if (!impl_ || !impl_->running.exchange(false)) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace thermotwin
