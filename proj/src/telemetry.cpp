// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/telemetry.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>

#include "thermotwin/error.hpp"

namespace thermotwin {

std::string_view quality_name(Quality q) {
  switch (q) {
    case Quality::Good: return "good";
    case Quality::Stale: return "stale";
    case Quality::Bad: return "bad";
  }
  return "bad";
}

std::int64_t sampling_period_ms(SamplingClass c) {
  return c == SamplingClass::Critical ? 100 : 1000;
}

std::int64_t monotonic_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// Namespace

Namespace::Namespace() {
  const auto &cat = canonical_catalog();
  auto add = [&](const ChannelSpec &spec, std::string id, SamplingClass sampling) {
    Entry e;
    e.node.id = id;
    e.node.sampling = sampling;
    const bool writable = spec.group == ChannelGroup::Actuator || spec.group == ChannelGroup::Demand;
    if (writable && id == spec.id) {
      e.node.access = Access::Writable;
      e.hi = spec.max_value;
    }
    nodes_.emplace(std::move(id), e);
  };
  for (const auto &spec : cat.channels()) add(spec, spec.id, spec.sampling);
  for (const auto &spec : cat.auxiliary()) add(spec, spec.id, spec.sampling);
  for (const auto &id : cat.output_order())
    add(cat.at(id), std::string(kTwinPrefix) + id, SamplingClass::Auxiliary);
  commands_ = Commands{};
}

const Namespace::Entry &Namespace::entry(std::string_view id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::UnknownNode, std::string(id));
  return it->second;
}

std::vector<std::string> Namespace::ids() const {
  std::vector<std::string> out;
  for (const auto &[id, e] : nodes_) out.push_back(id);
  return out;
}

bool Namespace::contains(std::string_view id) const { return nodes_.find(id) != nodes_.end(); }

SamplingClass Namespace::sampling(std::string_view id) const { return entry(id).node.sampling; }

NamespaceNode Namespace::read(std::string_view id, std::int64_t now) const {
  std::lock_guard lock(mutex_);
  NamespaceNode n = entry(id).node;
  if (n.t < 0)
    n.quality = Quality::Bad;
  else if (now - n.t > 3 * sampling_period_ms(n.sampling))
    n.quality = Quality::Stale;
  else
    n.quality = Quality::Good;
  return n;
}

void Namespace::write(std::string_view id, double value) {
  std::lock_guard lock(mutex_);
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::UnknownNode, std::string(id));
  Entry &e = it->second;
  if (e.node.access != Access::Writable) throw Error(Errc::AccessDenied, std::string(id));
  if (!std::isfinite(value) || value < e.lo || value > e.hi)
    throw Error(Errc::OutOfRange, std::string(id) + " accepts " + std::to_string(e.lo) + " to " +
                                      std::to_string(e.hi));
  e.node.value = value;
  if (id == "Heater_AO") commands_.heater_ao = value;
  else if (id == "Pump1_AO") commands_.pump1_ao = value;
  else if (id == "Pump2_AO") commands_.pump2_ao = value;
  else if (id == "CR_AO") commands_.cr_ao = value;
  else if (id == kDemandId) demand_ = value;
}

void Namespace::update(std::string_view id, double value, std::int64_t t) {
  std::lock_guard lock(mutex_);
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::UnknownNode, std::string(id));
  NamespaceNode &n = it->second.node;
  n.value = value;
  n.t = std::max(n.t, t);
}

void Namespace::publish_frame(const SensorFrame &frame, std::int64_t t, bool include_auxiliary) {
  auto put = [&](const std::string &id, double v) {
    NamespaceNode &n = nodes_.at(id).node;
    if (!include_auxiliary && n.sampling != SamplingClass::Critical) return;
    n.value = v;
    n.t = std::max(n.t, t);
  };
  std::lock_guard lock(mutex_);
  for (const auto &[id, v] : frame.values) put(id, v);
  for (const auto &[id, v] : frame.actuators) put(id, v);
  for (const auto &[id, v] : frame.aux) put(id, v);
  put(std::string(kDemandId), frame.demand_elec);
}

void Namespace::publish_twin(const SensorFrame &expected, std::int64_t t) {
  std::lock_guard lock(mutex_);
  auto put = [&](const std::string &id, double v) {
    NamespaceNode &n = nodes_.at(std::string(kTwinPrefix) + id).node;
    n.value = v;
    n.t = std::max(n.t, t);
  };
  for (const auto &[id, v] : expected.values) put(id, v);
  for (const auto &[id, v] : expected.actuators) put(id, v);
}

Commands Namespace::commands() const {
  std::lock_guard lock(mutex_);
  return commands_;
}

double Namespace::demand() const {
  std::lock_guard lock(mutex_);
  return demand_;
}

void Namespace::set_commands(const Commands &c, double demand) {
  std::lock_guard lock(mutex_);
  commands_ = c;
  demand_ = demand;
  nodes_.at("Heater_AO").node.value = c.heater_ao;
  nodes_.at("Pump1_AO").node.value = c.pump1_ao;
  nodes_.at("Pump2_AO").node.value = c.pump2_ao;
  nodes_.at("CR_AO").node.value = c.cr_ao;
  nodes_.at(std::string(kDemandId)).node.value = demand;
}

SensorFrame Namespace::frame() const {
  const auto &cat = canonical_catalog();
  std::lock_guard lock(mutex_);
  SensorFrame f;
  std::int64_t latest = 0;
  for (const auto &id : cat.measured()) {
    const auto &n = nodes_.at(id).node;
    f.values[id] = n.value;
    latest = std::max(latest, n.t);
  }
  for (auto id : kActuatorIds) f.actuators[std::string(id)] = nodes_.at(std::string(id)).node.value;
  for (auto id : kAuxiliaryIds) f.aux[std::string(id)] = nodes_.at(std::string(id)).node.value;
  f.demand_elec = nodes_.at(std::string(kDemandId)).node.value;
  f.t = static_cast<double>(latest) / 1000.0;
  return f;
}

nlohmann::json Namespace::snapshot(std::int64_t now) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto &id : ids()) {
    const auto n = read(id, now);
    j[id] = {{"value", n.value}, {"t", n.t}, {"quality", quality_name(n.quality)}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Publisher

std::uint64_t Publisher::subscribe(std::uint64_t client, std::vector<std::string> nodes,
                                   int rate_hz, const Namespace &ns, std::uint64_t tick) {
  if (rate_hz != 1 && rate_hz != 10)
    throw Error(Errc::MalformedMessage, "rate_hz must be 1 or 10");
  if (nodes.empty()) throw Error(Errc::MalformedMessage, "no nodes requested");
  for (const auto &id : nodes) {
    if (!ns.contains(id)) throw Error(Errc::UnknownNode, id);
    if (1000 / sampling_period_ms(ns.sampling(id)) < rate_hz)
      throw Error(Errc::OutOfRange, id + " is sampled at 1 Hz");
  }
  std::lock_guard lock(mutex_);
  subs_.push_back({next_id_, client, std::move(nodes), rate_hz, tick});
  return next_id_++;
}

void Publisher::drop_client(std::uint64_t client) {
  std::lock_guard lock(mutex_);
  std::erase_if(subs_, [&](const Subscription &s) { return s.client == client; });
}

std::size_t Publisher::size() const {
  std::lock_guard lock(mutex_);
  return subs_.size();
}

std::vector<Publisher::Message> Publisher::tick(std::uint64_t tick, std::int64_t now,
                                                const Namespace &ns) {
  std::lock_guard lock(mutex_);
  std::vector<Message> out;
  for (const auto &s : subs_) {
    const std::uint64_t every = s.rate_hz == 10 ? 1 : 10;
    if (tick < s.start_tick || (tick - s.start_tick) % every != 0) continue;
    nlohmann::json values = nlohmann::json::object();
    for (const auto &id : s.nodes) values[id] = ns.read(id, now).value;
    nlohmann::json msg = {{"op", "update"}, {"sub", s.id}, {"t", now}, {"values", values}};
    out.push_back({s.client, msg.dump()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Server

struct TelemetryServer::Client {
  std::uint64_t id = 0;
  int fd = -1;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::pair<std::int64_t, std::string>> queue;  // enqueue time, line
  bool closed = false;
  bool authed = false;
  std::thread reader, writer;
};

TelemetryServer::TelemetryServer(Namespace &ns, ServerOptions options)
    : ns_(ns), options_(std::move(options)) {}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start() {
  if (running_) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(Errc::InvalidConfig, std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::InvalidConfig, "bad listen address " + options_.host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 64) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(Errc::InvalidConfig, "cannot listen on port " + std::to_string(options_.port) +
                                         ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr *>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  publish_thread_ = std::thread([this] { publish_loop(); });
}

void TelemetryServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (publish_thread_.joinable()) publish_thread_.join();
  std::map<std::uint64_t, std::shared_ptr<Client>> clients;
  {
    std::lock_guard lock(clients_mutex_);
    clients.swap(clients_);
  }
  for (auto &[id, c] : clients) {
    {
      std::lock_guard lock(c->mutex);
      c->closed = true;
    }
    c->cv.notify_all();
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

std::size_t TelemetryServer::client_count() const {
  std::lock_guard lock(clients_mutex_);
  std::size_t n = 0;
  for (const auto &[id, c] : clients_) {
    std::lock_guard cl(c->mutex);
    n += c->closed ? 0 : 1;
  }
  return n;
}

void TelemetryServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto c = std::make_shared<Client>();
    c->fd = fd;
    c->authed = options_.token.empty();
    {
      std::lock_guard lock(clients_mutex_);
      c->id = next_client_++;
      clients_[c->id] = c;
    }
    c->reader = std::thread([this, c] { reader_loop(c); });
    c->writer = std::thread([this, c] { writer_loop(c); });
    reap();
  }
}

void TelemetryServer::reap() {
  std::vector<std::shared_ptr<Client>> dead;
  {
    std::lock_guard lock(clients_mutex_);
    for (auto it = clients_.begin(); it != clients_.end();) {
      bool closed;
      {
        std::lock_guard cl(it->second->mutex);
        closed = it->second->closed;
      }
      if (closed) {
        dead.push_back(it->second);
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto &c : dead) {
    publisher_.drop_client(c->id);
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

void TelemetryServer::enqueue(Client &c, std::string line) {
  {
    std::lock_guard lock(c.mutex);
    if (c.closed) return;
    c.queue.emplace_back(monotonic_ms(), std::move(line));
  }
  c.cv.notify_one();
}

void TelemetryServer::publish_loop() {
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  const auto slow_ms = static_cast<std::int64_t>(options_.slow_client_s * 1000.0);
  while (running_) {
    next += std::chrono::milliseconds(100);
    std::this_thread::sleep_until(next);
    if (!running_) break;
    const std::int64_t now = monotonic_ms();
    const std::uint64_t tick = tick_.fetch_add(1) + 1;
    auto messages = publisher_.tick(tick, now, ns_);

    std::map<std::uint64_t, std::shared_ptr<Client>> clients;
    {
      std::lock_guard lock(clients_mutex_);
      clients = clients_;
    }
    for (auto &m : messages)
      if (auto it = clients.find(m.client); it != clients.end()) enqueue(*it->second, std::move(m.line));
    for (auto &[id, c] : clients) {
      bool slow = false;
      {
        std::lock_guard lock(c->mutex);
        slow = !c->closed && !c->queue.empty() && now - c->queue.front().first > slow_ms;
        if (slow) c->closed = true;
      }
      if (slow) {
        std::cerr << "telemetry: client " << id << " disconnected, backlog exceeded "
                  << options_.slow_client_s << " s\n";
        publisher_.drop_client(id);
        c->cv.notify_all();
        ::shutdown(c->fd, SHUT_RDWR);
      }
    }
    if (tick % 10 == 0) reap();
  }
}

void TelemetryServer::reader_loop(std::shared_ptr<Client> c) {
  std::string buffer;
  char chunk[4096];
  while (running_) {
    const ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      enqueue(*c, handle_request(line, c->id));
    }
    if (buffer.size() > (1u << 20)) {
      enqueue(*c, R"({"ok":false,"err":"MalformedMessage"})");
      buffer.clear();
    }
  }
  {
    std::lock_guard lock(c->mutex);
    c->closed = true;
  }
  publisher_.drop_client(c->id);
  c->cv.notify_all();
}

void TelemetryServer::writer_loop(std::shared_ptr<Client> c) {
  while (true) {
    std::string line;
    {
      std::unique_lock lock(c->mutex);
      c->cv.wait(lock, [&] { return c->closed || !c->queue.empty(); });
      if (c->closed) return;
      line = std::move(c->queue.front().second);
    }
    line += '\n';
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::send(c->fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        std::lock_guard lock(c->mutex);
        c->closed = true;
        return;
      }
      sent += static_cast<std::size_t>(n);
    }
    std::lock_guard lock(c->mutex);
    if (!c->queue.empty()) c->queue.pop_front();
  }
}

std::string TelemetryServer::handle_request(const std::string &line, std::uint64_t client) {
  const auto start = std::chrono::steady_clock::now();
  nlohmann::json reply;
  try {
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &) {
      throw Error(Errc::MalformedMessage, "not JSON");
    }
    if (!msg.is_object() || !msg.contains("op") || !msg["op"].is_string())
      throw Error(Errc::MalformedMessage, "missing op");
    const std::string op = msg["op"];

    bool authed = true;
    if (!options_.token.empty()) {
      std::lock_guard lock(clients_mutex_);
      if (auto it = clients_.find(client); it != clients_.end()) authed = it->second->authed;
    }
    if (op == "auth") {
      if (!msg.contains("token") || !msg["token"].is_string() ||
          (!options_.token.empty() && msg["token"] != options_.token))
        throw Error(Errc::AccessDenied, "bad token");
      std::lock_guard lock(clients_mutex_);
      if (auto it = clients_.find(client); it != clients_.end()) it->second->authed = true;
      reply = {{"ok", true}};
    } else if (!authed) {
      throw Error(Errc::AccessDenied, "authenticate first");
    } else if (op == "read") {
      if (!msg.contains("node") || !msg["node"].is_string())
        throw Error(Errc::MalformedMessage, "read needs a node");
      const auto n = ns_.read(msg["node"].get<std::string>(), monotonic_ms());
      reply = {{"ok", true},
               {"node", n.id},
               {"value", n.value},
               {"t", n.t},
               {"quality", quality_name(n.quality)}};
    } else if (op == "write") {
      if (!msg.contains("node") || !msg["node"].is_string() || !msg.contains("value") ||
          !msg["value"].is_number())
        throw Error(Errc::MalformedMessage, "write needs a node and a numeric value");
      ns_.write(msg["node"].get<std::string>(), msg["value"].get<double>());
      reply = {{"ok", true}};
    } else if (op == "subscribe") {
      if (!msg.contains("nodes") || !msg["nodes"].is_array())
        throw Error(Errc::MalformedMessage, "subscribe needs a node list");
      std::vector<std::string> nodes;
      for (const auto &n : msg["nodes"]) {
        if (!n.is_string()) throw Error(Errc::MalformedMessage, "node ids must be strings");
        nodes.push_back(n.get<std::string>());
      }
      const int rate = msg.contains("rate_hz") && msg["rate_hz"].is_number_integer()
                           ? msg["rate_hz"].get<int>()
                           : (msg.contains("rate_hz") ? -1 : 1);
      const auto id = publisher_.subscribe(client, std::move(nodes), rate, ns_, tick_.load() + 1);
      reply = {{"ok", true}, {"op", "subscribed"}, {"sub", id}, {"rate_hz", rate}};
    } else if (op == "list") {
      reply = {{"ok", true}, {"nodes", ns_.ids()}};
    } else {
      throw Error(Errc::MalformedMessage, "unknown op " + op);
    }
  } catch (const Error &e) {
    reply = {{"ok", false}, {"err", errc_name(e.code())}, {"detail", e.what()}};
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (ms > options_.deadline_ms) {
    ++deadline_misses_;
    std::cerr << "telemetry: DeadlineMiss " << ms << " ms\n";
  }
  return reply.dump();
}

// ---------------------------------------------------------------------------
// Client

TelemetryClient::TelemetryClient(const std::string &host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (fd_ < 0 || ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
      ::connect(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) < 0) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw Error(Errc::BackendUnavailable, "cannot connect to " + host + ":" + std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TelemetryClient::~TelemetryClient() {
  if (fd_ >= 0) ::close(fd_);
}

void TelemetryClient::send(const std::string &line) {
  const std::string out = line + '\n';
  std::size_t sent = 0;
  while (sent < out.size()) {
    const ssize_t n = ::send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw Error(Errc::BackendUnavailable, "connection lost");
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> TelemetryClient::receive(double timeout_s) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (true) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                          deadline - std::chrono::steady_clock::now())
                          .count();
    if (left <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left)) <= 0) return std::nullopt;
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

nlohmann::json TelemetryClient::request(const nlohmann::json &msg, double timeout_s) {
  send(msg.dump());
  while (auto line = receive(timeout_s)) {
    auto j = nlohmann::json::parse(*line);
    if (j.value("op", "") != "update") return j;
  }
  throw Error(Errc::Timeout, "no reply");
}

// ---------------------------------------------------------------------------
// Plant driver

PlantDriver::PlantDriver(Namespace &ns, const PlantConfig &config, const PlantState &initial,
                         DriverOptions options)
    : ns_(ns), config_(config), options_(options), state_(initial), rng_(options.seed) {
  config_.validate();
  ns_.set_commands(initial.applied, initial.demand_elec);
  const auto frame = measure(state_, config_, options_.noise_enabled, rng_);
  history_.push_back(frame);
  ns_.publish_frame(frame, monotonic_ms(), true);
}

PlantDriver::~PlantDriver() { stop(); }

void PlantDriver::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { loop(); });
}

void PlantDriver::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
}

void PlantDriver::pause() { paused_ = true; }
void PlantDriver::resume() { paused_ = false; }

void PlantDriver::step_once(std::int64_t now) {
  const Commands cmd = ns_.commands();
  const double demand = ns_.demand();
  SensorFrame frame;
  bool whole_second;
  {
    std::lock_guard lock(mutex_);
    state_ = step(state_, cmd, demand, config_.dt, config_);
    ++substep_;
    const auto per_second = static_cast<std::uint64_t>(std::lround(1.0 / config_.dt));
    whole_second = substep_ % per_second == 0;
    frame = measure(state_, config_, options_.noise_enabled, rng_);
    if (whole_second) {
      history_.push_back(frame);
      if (history_.size() > options_.history) history_.erase(history_.begin());
    }
  }
  ns_.publish_frame(frame, now, whole_second);
}

void PlantDriver::loop() {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(config_.dt / options_.speed));
  auto next = clock::now();
  while (running_) {
    next += period;
    std::this_thread::sleep_until(next);
    if (!paused_) step_once(monotonic_ms());
  }
}

Trajectory PlantDriver::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

PlantState PlantDriver::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

}  // namespace thermotwin
