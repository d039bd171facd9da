// SPDX-License-Identifier: Apache-2.0
//
// Unified namespace of plant and twin channels, served to clients as
// newline-delimited JSON over TCP:
//
//   {"op":"read","node":"TF11"}
//   {"op":"write","node":"Heater_AO","value":35.0}
//   {"op":"subscribe","nodes":["TF11","FT1"],"rate_hz":10}
//
// Subscribers then receive {"op":"update","t":...,"values":{...}} batches.
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "thermotwin/channels.hpp"
#include "thermotwin/plant.hpp"

namespace thermotwin {

enum class Quality { Good, Stale, Bad };
enum class Access { ReadOnly, Writable };

std::string_view quality_name(Quality q);

inline constexpr std::string_view kTwinPrefix = "dt_";

struct NamespaceNode {
  std::string id;
  double value = 0.0;
  std::int64_t t = -1;  // ms; -1 until first update
  Quality quality = Quality::Bad;
  Access access = Access::ReadOnly;
  SamplingClass sampling = SamplingClass::Auxiliary;
};

/// Sampling period in ms for a class: critical 100, auxiliary 1000.
std::int64_t sampling_period_ms(SamplingClass c);

class Namespace {
 public:
  Namespace();

  std::vector<std::string> ids() const;
  bool contains(std::string_view id) const;
  SamplingClass sampling(std::string_view id) const;

  /// Quality is Bad before the first update and Stale once the value is older
  /// than three sampling periods at `now`.
  NamespaceNode read(std::string_view id, std::int64_t now) const;

  /// Operator write. Only the actuators and Demand_Elec accept writes, within
  /// their ranges. The value becomes the commanded state immediately.
  void write(std::string_view id, double value);

  /// Producer update; timestamps never move backwards.
  void update(std::string_view id, double value, std::int64_t t);
  void publish_frame(const SensorFrame &frame, std::int64_t t, bool include_auxiliary);
  void publish_twin(const SensorFrame &expected, std::int64_t t);

  Commands commands() const;
  double demand() const;
  /// Seeds the commanded state without touching node timestamps.
  void set_commands(const Commands &c, double demand);

  /// Latest values of the catalog channels as a frame.
  SensorFrame frame() const;
  nlohmann::json snapshot(std::int64_t now) const;

 private:
  struct Entry {
    NamespaceNode node;
    double lo = 0.0, hi = 0.0;  // write bounds
  };
  const Entry &entry(std::string_view id) const;

  mutable std::mutex mutex_;
  std::map<std::string, Entry, std::less<>> nodes_;
  Commands commands_;
  double demand_ = 0.0;
};

struct Subscription {
  std::uint64_t id = 0;
  std::uint64_t client = 0;
  std::vector<std::string> nodes;
  int rate_hz = 1;
  std::uint64_t start_tick = 0;
};

/// Time-driven publication at a 10 Hz base tick.
class Publisher {
 public:
  /// Throws UnknownNode, MalformedMessage (rate not 1 or 10) or OutOfRange
  /// (rate above a node's class rate).
  std::uint64_t subscribe(std::uint64_t client, std::vector<std::string> nodes, int rate_hz,
                          const Namespace &ns, std::uint64_t tick);
  void drop_client(std::uint64_t client);
  std::size_t size() const;

  struct Message {
    std::uint64_t client;
    std::string line;
  };
  std::vector<Message> tick(std::uint64_t tick, std::int64_t now, const Namespace &ns);

 private:
  mutable std::mutex mutex_;
  std::vector<Subscription> subs_;
  std::uint64_t next_id_ = 1;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 4840;  // 0 picks a free port
  double slow_client_s = 2.0;
  double deadline_ms = 100.0;
  std::string token;  // when set, clients must send {"op":"auth","token":...} first
};

/// Milliseconds on the server's monotonic clock.
std::int64_t monotonic_ms();

class TelemetryServer {
 public:
  TelemetryServer(Namespace &ns, ServerOptions options = {});
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer &) = delete;
  TelemetryServer &operator=(const TelemetryServer &) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return bound_port_; }
  std::size_t client_count() const;
  std::uint64_t ticks() const { return tick_.load(); }
  std::uint64_t deadline_misses() const { return deadline_misses_.load(); }

  /// Processes one request line from `client` and returns the reply line.
  std::string handle_request(const std::string &line, std::uint64_t client);

 private:
  struct Client;
  void accept_loop();
  void publish_loop();
  void reader_loop(std::shared_ptr<Client> c);
  void writer_loop(std::shared_ptr<Client> c);
  void enqueue(Client &c, std::string line);
  void reap();

  Namespace &ns_;
  ServerOptions options_;
  Publisher publisher_;
  int listen_fd_ = -1;
  std::uint16_t bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> tick_{0};
  std::atomic<std::uint64_t> deadline_misses_{0};
  std::thread accept_thread_, publish_thread_;
  mutable std::mutex clients_mutex_;
  std::map<std::uint64_t, std::shared_ptr<Client>> clients_;
  std::uint64_t next_client_ = 1;
};

/// Minimal blocking client for the line protocol.
class TelemetryClient {
 public:
  TelemetryClient(const std::string &host, std::uint16_t port);
  ~TelemetryClient();
  TelemetryClient(const TelemetryClient &) = delete;
  TelemetryClient &operator=(const TelemetryClient &) = delete;

  void send(const std::string &line);
  /// Next line, or nullopt on timeout or disconnect.
  std::optional<std::string> receive(double timeout_s = 5.0);
  nlohmann::json request(const nlohmann::json &msg, double timeout_s = 5.0);

 private:
  int fd_ = -1;
  std::string buffer_;
};

struct DriverOptions {
  double speed = 1.0;  // simulated seconds per wall-clock second
  bool noise_enabled = true;
  std::uint64_t seed = 0;
  std::size_t history = 600;  // 1 Hz frames kept for the twin
};

/// Steps the plant simulator in real time and publishes its readings.
class PlantDriver {
 public:
  PlantDriver(Namespace &ns, const PlantConfig &config, const PlantState &initial,
              DriverOptions options = {});
  ~PlantDriver();

  void start();
  void stop();
  void pause();
  void resume();
  bool paused() const { return paused_.load(); }

  /// One 0.1 s integration step and publication at time `now`.
  void step_once(std::int64_t now);

  Trajectory history() const;
  PlantState state() const;

 private:
  void loop();

  Namespace &ns_;
  PlantConfig config_;
  DriverOptions options_;
  mutable std::mutex mutex_;
  PlantState state_;
  Rng rng_;
  Trajectory history_;
  std::uint64_t substep_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<bool> paused_{false};
  std::thread thread_;
};

}  // namespace thermotwin
