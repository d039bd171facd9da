// SPDX-License-Identifier: Apache-2.0
//
// Pieces of the `serve` verb beyond the line protocol: the twin expectation
// publisher and the HTTP gateway used by the browser console.
//
//   GET  /api/state    snapshot of every namespace node
//   GET  /api/stream   server-sent events, one snapshot per second
//   POST /api/command  {"node":..., "value":...} or {"action":"pause"|"resume"}
//   POST /api/assist   {"query":...}
#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "thermotwin/assistant.hpp"
#include "thermotwin/gru.hpp"
#include "thermotwin/telemetry.hpp"
#include "thermotwin/twin.hpp"

namespace thermotwin {

/// Recomputes the twin's steady-state expectation for the current demand and
/// publishes it under the dt_ nodes.
class TwinDriver {
 public:
  struct Options {
    double refresh_s = 30.0;  // recompute at least this often
    RolloutOptions rollout{600, 1e-3, 30};
  };

  TwinDriver(Namespace &ns, const PlantDriver &plant, const GruModel &model, Options options);
  ~TwinDriver();

  void start();
  void stop();
  /// Runs one rollout from the plant history now. Returns false on cold start.
  bool refresh();
  std::optional<TwinExpectation> expectation() const;

 private:
  void loop();

  Namespace &ns_;
  const PlantDriver &plant_;
  InferenceEngine engine_;
  Options options_;
  mutable std::mutex mutex_;
  std::optional<TwinExpectation> latest_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

class Gateway {
 public:
  Gateway(Namespace &ns, PlantDriver *plant, const TwinDriver *twin, BackendConfig backend);
  ~Gateway();

  /// Binds and serves on a background thread; port 0 picks a free port.
  void start(const std::string &host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace thermotwin
