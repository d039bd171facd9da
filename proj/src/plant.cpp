// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include "json.hpp"

#include "thermotwin/error.hpp"

namespace thermotwin {

namespace {

// Fluid node indices, catalog order.
enum Node : std::size_t { TF11, TF12, TF13, TF14, TF15, TF21, TF22, TF23, TF24, TF25, TF31, TF32 };

constexpr std::size_t kVars = kFluidNodes + kHeaterNodes;
using Vars = std::array<double, kVars>;

struct Flows {
  double primary;
  double secondary;
  double sink;
};

Flows flows_for(const Commands &applied, const PlantConfig &config) {
  return {pump_flow(applied.pump1_ao, config), pump_flow(applied.pump2_ao, config),
          config.sink_flow};
}

double rod_at(double start, double target, double rate, double tau) {
  const double travel = rate * tau;
  return start + std::clamp(target - start, -travel, travel);
}

double heater_power(const Commands &applied, double rod, const PlantConfig &config) {
  return applied.heater_ao / 100.0 * config.heater_max_power * rod_power_factor(rod);
}

Vars derivatives(const Vars &y, double q_heater, const Flows &flows, const PlantConfig &config) {
  const double cp = config.cp;
  const double amb = config.ambient_temp;
  const double *tf = y.data();
  const double *th = y.data() + kFluidNodes;
  Vars dy{};

  double q_sheaths = 0.0;
  for (std::size_t i = 0; i < kHeaterNodes; ++i) {
    const double ha = config.sheath_hA[i];
    const double to_fluid = ha * (th[i] - tf[TF12]);
    q_sheaths += to_fluid;
    dy[kFluidNodes + i] = (q_heater / kHeaterNodes - to_fluid) / (ha * config.sheath_time_constant);
  }

  const double q1 =
      hx_heat_rate(tf[TF14], tf[TF21], flows.primary, flows.secondary, config.hx1_ua, cp);
  const double q2 =
      hx_heat_rate(tf[TF24], tf[TF31], flows.secondary, flows.sink, config.hx2_ua, cp);

  auto node = [&](std::size_t i, std::size_t up, double mdot, double q) {
    const double net = mdot * cp * (tf[up] - tf[i]) + q - config.loss_ua[i] * (tf[i] - amb);
    dy[i] = net / config.node_thermal_masses[i];
  };
  node(TF11, TF15, flows.primary, 0.0);
  node(TF12, TF11, flows.primary, q_sheaths);
  node(TF13, TF12, flows.primary, 0.0);
  node(TF14, TF13, flows.primary, 0.0);
  node(TF15, TF14, flows.primary, -q1);
  node(TF21, TF25, flows.secondary, 0.0);
  node(TF22, TF21, flows.secondary, q1);
  node(TF23, TF22, flows.secondary, 0.0);
  node(TF24, TF23, flows.secondary, 0.0);
  node(TF25, TF24, flows.secondary, -q2);
  dy[TF31] = 0.0;
  node(TF32, TF31, flows.sink, q2);
  return dy;
}

void check_range(double v, double lo, double hi, const char *what) {
  if (!(v >= lo && v <= hi))
    throw Error(Errc::OutOfRange, std::string(what) + " = " + std::to_string(v));
}

}  // namespace

void PlantConfig::validate() const {
  auto positive = [](double v, const char *name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(Errc::InvalidConfig, std::string(name) + " must be > 0");
  };
  positive(heater_max_power, "heater_max_power");
  positive(pump_max_flow, "pump_max_flow");
  positive(pump_max_freq, "pump_max_freq");
  positive(vfd_resolution, "vfd_resolution");
  positive(rod_stroke, "rod_stroke");
  positive(rod_speed, "rod_speed");
  positive(heater_power_resolution, "heater_power_resolution");
  positive(cp, "cp");
  positive(sheath_time_constant, "sheath_time_constant");
  positive(hx1_ua, "hx1_ua");
  positive(hx2_ua, "hx2_ua");
  positive(sink_flow, "sink_flow");
  positive(heater_voltage_nominal, "heater_voltage_nominal");
  positive(dt, "dt");
  for (std::size_t i = 0; i < kFluidNodes; ++i) {
    if (i != kSinkInletNode) positive(node_thermal_masses[i], "node_thermal_masses");
    if (loss_ua[i] < 0.0) throw Error(Errc::InvalidConfig, "loss_ua must be >= 0");
  }
  for (double ha : sheath_hA) positive(ha, "sheath_hA");
  if (!(conversion_efficiency > 0.0 && conversion_efficiency < 1.0))
    throw Error(Errc::InvalidConfig, "conversion_efficiency must be in (0,1)");
}

double rod_power_factor(double position) {
  check_range(position, 0.0, 100.0, "rod position");
  return 1.0 - position / 100.0;
}

double quantize_pump(double hz, const PlantConfig &config) {
  return std::round(hz / config.vfd_resolution) * config.vfd_resolution;
}

double quantize_heater(double pct, const PlantConfig &config) {
  return std::round(pct / config.heater_power_resolution) * config.heater_power_resolution;
}

double pump_flow(double freq, const PlantConfig &config) {
  check_range(freq, 0.0, config.pump_max_freq, "pump frequency");
  const double q = std::min(quantize_pump(freq, config), config.pump_max_freq);
  return config.pump_max_flow * q / config.pump_max_freq;
}

double hx_heat_rate(double t_hot_in, double t_cold_in, double mdot_hot, double mdot_cold,
                    double ua, double cp) {
  if (mdot_hot <= 0.0 || mdot_cold <= 0.0 || t_hot_in == t_cold_in) return 0.0;
  const double c_hot = mdot_hot * cp;
  const double c_cold = mdot_cold * cp;
  const double c_min = std::min(c_hot, c_cold);
  const double c_r = c_min / std::max(c_hot, c_cold);
  const double ntu = ua / c_min;
  double eff;
  if (std::abs(1.0 - c_r) < 1e-9) {
    eff = ntu / (1.0 + ntu);
  } else {
    const double e = std::exp(-ntu * (1.0 - c_r));
    eff = (1.0 - e) / (1.0 - c_r * e);
  }
  return eff * c_min * (t_hot_in - t_cold_in);
}

PlantState ambient_state(const PlantConfig &config) {
  PlantState s;
  s.fluid.fill(config.ambient_temp);
  s.fluid[kSinkInletNode] = config.sink_inlet_temp;
  s.sheath.fill(config.ambient_temp);
  s.rod_position = 0.0;
  s.applied = Commands{0.0, 0.0, 0.0, 0.0};
  return s;
}

PlantState idle_state(const PlantConfig &config) {
  PlantState s = ambient_state(config);
  s.rod_position = 100.0;
  s.applied = Commands{0.0, quantize_pump(10.0, config), quantize_pump(9.7, config), 100.0};
  return s;
}

PlantOutputs outputs(const PlantState &state, const PlantConfig &config) {
  PlantOutputs out;
  const Flows f = flows_for(state.applied, config);
  out.flows = {f.primary, f.secondary, f.sink};
  for (std::size_t i = 0; i < 4; ++i) {
    const double mdot = i < 3 ? f.primary : f.secondary;
    out.pressures[i] = config.pressure_ref[i] + config.pressure_coef[i] * mdot * mdot;
  }
  out.heat_power = heater_power(state.applied, state.rod_position, config);
  out.sink_removal = f.sink * config.cp * (state.fluid[TF32] - state.fluid[TF31]);
  out.elec_power = config.conversion_efficiency * out.sink_removal;
  for (std::size_t i = 0; i < kFluidNodes; ++i)
    out.losses += config.loss_ua[i] * (state.fluid[i] - config.ambient_temp);
  const double q = state.applied.heater_ao / 100.0;
  out.heater_voltage = config.heater_voltage_nominal * std::sqrt(q);
  out.heater_current =
      out.heater_voltage > 0.0 ? q * config.heater_max_power / out.heater_voltage : 0.0;
  return out;
}

PlantState step(const PlantState &state, const Commands &commands, double demand, double dt,
                const PlantConfig &config) {
  if (!(dt > 0.0 && dt <= 0.5)) throw Error(Errc::OutOfRange, "dt must be in (0, 0.5]");
  check_range(commands.heater_ao, 0.0, 100.0, "Heater_AO");
  check_range(commands.pump1_ao, 0.0, config.pump_max_freq, "Pump1_AO");
  check_range(commands.pump2_ao, 0.0, config.pump_max_freq, "Pump2_AO");
  check_range(commands.cr_ao, 0.0, 100.0, "CR_AO");

  PlantState next = state;
  next.applied = Commands{std::min(quantize_heater(commands.heater_ao, config), 100.0),
                          std::min(quantize_pump(commands.pump1_ao, config), config.pump_max_freq),
                          std::min(quantize_pump(commands.pump2_ao, config), config.pump_max_freq),
                          commands.cr_ao};
  next.demand_elec = demand;

  const Flows flows = flows_for(next.applied, config);
  const double rate = config.rod_slew_pct();
  const double rod0 = state.rod_position;
  const double target = next.applied.cr_ao;
  auto q_at = [&](double tau) {
    return heater_power(next.applied, rod_at(rod0, target, rate, tau), config);
  };

  Vars y;
  std::copy(state.fluid.begin(), state.fluid.end(), y.begin());
  std::copy(state.sheath.begin(), state.sheath.end(), y.begin() + kFluidNodes);

  auto axpy = [](const Vars &a, const Vars &b, double h) {
    Vars r;
    for (std::size_t i = 0; i < kVars; ++i) r[i] = a[i] + h * b[i];
    return r;
  };
  const Vars k1 = derivatives(y, q_at(0.0), flows, config);
  const Vars k2 = derivatives(axpy(y, k1, dt / 2), q_at(dt / 2), flows, config);
  const Vars k3 = derivatives(axpy(y, k2, dt / 2), q_at(dt / 2), flows, config);
  const Vars k4 = derivatives(axpy(y, k3, dt), q_at(dt), flows, config);
  for (std::size_t i = 0; i < kVars; ++i) {
    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::isfinite(y[i])) throw Error(Errc::NonFinite, "plant state diverged");
  }
  std::copy(y.begin(), y.begin() + kFluidNodes, next.fluid.begin());
  std::copy(y.begin() + kFluidNodes, y.end(), next.sheath.begin());
  next.fluid[kSinkInletNode] = config.sink_inlet_temp;
  next.rod_position = std::clamp(rod_at(rod0, target, rate, dt), 0.0, 100.0);
  next.t = state.t + dt;
  return next;
}

SensorFrame measure(const PlantState &state, const PlantConfig &config, bool noise_enabled,
                    Rng &rng) {
  const auto &catalog = canonical_catalog();
  const PlantOutputs out = outputs(state, config);

  SensorFrame frame;
  frame.t = state.t;
  frame.demand_elec = state.demand_elec;

  std::array<double, kMeasuredCount> truth{};
  std::copy(state.fluid.begin(), state.fluid.end(), truth.begin());
  std::copy(state.sheath.begin(), state.sheath.end(), truth.begin() + kFluidNodes);
  std::copy(out.pressures.begin(), out.pressures.end(), truth.begin() + 16);
  std::copy(out.flows.begin(), out.flows.end(), truth.begin() + 20);
  truth[23] = out.heat_power / 1000.0;
  truth[24] = out.elec_power / 1000.0;

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto corrupt = [&](const ChannelSpec &spec, double v) {
    if (!noise_enabled) return v;
    switch (spec.noise) {
      case NoiseKind::None: return v;
      case NoiseKind::Absolute: return v + spec.uncertainty * gauss(rng);
      case NoiseKind::Relative: return v + spec.uncertainty * std::abs(v) * gauss(rng);
      case NoiseKind::Uniform: return v + spec.uncertainty * unit(rng);
    }
    return v;
  };

  for (std::size_t i = 0; i < kMeasuredCount; ++i) {
    const auto &spec = catalog.channels()[i];
    frame.values.emplace(spec.id, corrupt(spec, truth[i]));
  }
  frame.actuators = {{"Heater_AO", state.applied.heater_ao},
                     {"Pump1_AO", state.applied.pump1_ao},
                     {"Pump2_AO", state.applied.pump2_ao},
                     {"CR_AO", state.applied.cr_ao}};
  frame.aux.emplace("Heater_V", corrupt(catalog.at("Heater_V"), out.heater_voltage));
  frame.aux.emplace("Heater_I", corrupt(catalog.at("Heater_I"), out.heater_current));
  frame.aux.emplace("CR_Pos",
                    std::clamp(corrupt(catalog.at("CR_Pos"), state.rod_position), 0.0, 100.0));
  return frame;
}

void DemandController::reset(const PlantState &state, const PlantConfig &config) {
  heat_target_ = heater_power(state.applied, state.rod_position, config);
  energized_ = state.applied.heater_ao > 0.0;
  pump1_ = state.applied.pump1_ao;
  pump2_ = state.applied.pump2_ao;
}

Commands DemandController::update(const PlantState &state, double demand, double dt,
                                  const PlantConfig &config) {
  if (pump1_ < 0.0) reset(state, config);
  const double losses = outputs(state, config).losses;
  const double goal =
      demand > 0.0
          ? std::min(demand * 1000.0 / config.conversion_efficiency + std::max(losses, 0.0),
                     config.heater_max_power)
          : 0.0;
  const double max_delta = params_.ramp * dt;
  heat_target_ += std::clamp(goal - heat_target_, -max_delta, max_delta);

  auto ramp_pump = [&](double &current, double base) {
    const double want = std::clamp(base + params_.pump_gain * demand, 0.0, config.pump_max_freq);
    const double step = params_.pump_ramp * dt;
    current += std::clamp(want - current, -step, step);
  };
  ramp_pump(pump1_, params_.pump1_base);
  ramp_pump(pump2_, params_.pump2_base);

  // Once energized the heater stays on and the rod alone sets the power.
  energized_ = energized_ || heat_target_ > 0.0;
  Commands c;
  c.pump1_ao = pump1_;
  c.pump2_ao = pump2_;
  c.heater_ao = energized_ ? 100.0 : 0.0;
  c.cr_ao = std::clamp(100.0 * (1.0 - heat_target_ / config.heater_max_power), 0.0, 100.0);
  return c;
}

void Scenario::validate() const {
  if (!(dt > 0.0 && dt <= 0.1)) throw Error(Errc::InvalidConfig, "scenario dt must be in (0, 0.1]");
  if (!(duration >= 0.0)) throw Error(Errc::InvalidConfig, "scenario duration must be >= 0");
  double prev = 0.0;
  for (const auto &e : schedule) {
    if (e.t < 0.0 || e.t > duration)
      throw Error(Errc::InvalidConfig, "schedule time outside [0, duration]");
    if (e.t < prev) throw Error(Errc::InvalidConfig, "schedule is not time-ordered");
    prev = e.t;
  }
}

Trajectory run_scenario(const PlantConfig &config, const Scenario &scenario,
                        std::vector<PlantState> *states) {
  config.validate();
  scenario.validate();

  PlantState state = scenario.initial.value_or(idle_state(config));
  Commands commands = state.applied;
  double demand = state.demand_elec;
  DemandController controller;
  Rng rng(scenario.seed);

  const auto frames = static_cast<std::size_t>(std::floor(scenario.duration + 1e-9)) + 1;
  const auto substeps = static_cast<std::size_t>(std::llround(1.0 / scenario.dt));
  const double h = 1.0 / static_cast<double>(substeps);
  std::size_t next_event = 0;

  Trajectory out;
  out.reserve(frames);
  if (states) states->reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    state.t = static_cast<double>(k);
    out.push_back(measure(state, config, scenario.noise_enabled, rng));
    if (states) states->push_back(state);
    if (k + 1 == frames) break;
    for (std::size_t s = 0; s < substeps; ++s) {
      const double now = static_cast<double>(k) + h * static_cast<double>(s);
      while (next_event < scenario.schedule.size() &&
             scenario.schedule[next_event].t <= now + 1e-9) {
        const auto &e = scenario.schedule[next_event++];
        if (e.heater_ao) commands.heater_ao = *e.heater_ao;
        if (e.pump1_ao) commands.pump1_ao = *e.pump1_ao;
        if (e.pump2_ao) commands.pump2_ao = *e.pump2_ao;
        if (e.cr_ao) commands.cr_ao = *e.cr_ao;
        if (e.demand) demand = *e.demand;
      }
      if (scenario.mode == ControlMode::Demand)
        commands = controller.update(state, demand, h, config);
      state = step(state, commands, demand, h, config);
    }
  }
  return out;
}

Commands commands_for_power(double watts, const PlantConfig &config, double pump1,
                            double pump2) {
  check_range(watts, 0.0, config.heater_max_power, "heater power");
  Commands c{0.0, pump1, pump2, 100.0};
  if (watts <= 0.0) return c;
  const double res = config.heater_power_resolution;
  double pct = std::ceil(watts / config.heater_max_power * 100.0 / res - 1e-12) * res;
  pct = std::min(pct, 100.0);
  c.heater_ao = pct;
  c.cr_ao = std::clamp(100.0 * (1.0 - watts / (pct / 100.0 * config.heater_max_power)), 0.0, 100.0);
  return c;
}

Scenario staircase_scenario(double plateau) {
  const PlantConfig config;
  Scenario s;
  s.duration = 4.0 * plateau;
  s.dt = 0.1;
  s.mode = ControlMode::Manual;
  s.initial = idle_state(config);
  const double levels[] = {490.0, 1692.0, 4536.0, 9220.0};
  for (int i = 0; i < 4; ++i) {
    const Commands c = commands_for_power(levels[i], config);
    s.schedule.push_back({plateau * i, c.heater_ao, c.pump1_ao, c.pump2_ao, c.cr_ao, std::nullopt});
  }
  return s;
}

Scenario demand_scenario(std::size_t steps, std::uint64_t seed, bool noise_enabled) {
  if (steps < 2) throw Error(Errc::InvalidConfig, "at least 2 steps required");
  Scenario s;
  s.duration = static_cast<double>(steps - 1);
  s.dt = 0.1;
  s.mode = ControlMode::Demand;
  s.noise_enabled = noise_enabled;
  s.seed = seed;
  s.initial = idle_state(PlantConfig{});

  Rng rng(seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> hold(180.0, 420.0);
  std::uniform_real_distribution<double> level(0.3, 3.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> cold(30.0, 90.0);

  s.schedule.push_back({0.0, {}, {}, {}, {}, 0.0});
  double t = std::round(cold(rng));
  double previous = 0.0;
  while (t < s.duration) {
    double next = 0.0;
    if (previous == 0.0 || coin(rng) > 0.2) next = std::round(level(rng) * 1000.0) / 1000.0;
    s.schedule.push_back({t, {}, {}, {}, {}, next});
    previous = next;
    t += std::round(hold(rng));
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON configuration

namespace {

using nlohmann::json;

template <class T>
void read_key(const json &j, const char *key, T &out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

json read_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
}

void apply_plant_config(const json &j, PlantConfig &c) {
  read_key(j, "heater_max_power", c.heater_max_power);
  read_key(j, "pump_max_flow", c.pump_max_flow);
  read_key(j, "pump_max_freq", c.pump_max_freq);
  read_key(j, "vfd_resolution", c.vfd_resolution);
  read_key(j, "rod_stroke", c.rod_stroke);
  read_key(j, "rod_speed", c.rod_speed);
  read_key(j, "heater_power_resolution", c.heater_power_resolution);
  read_key(j, "conversion_efficiency", c.conversion_efficiency);
  read_key(j, "cp", c.cp);
  read_key(j, "node_thermal_masses", c.node_thermal_masses);
  read_key(j, "sheath_hA", c.sheath_hA);
  read_key(j, "sheath_time_constant", c.sheath_time_constant);
  read_key(j, "hx1_ua", c.hx1_ua);
  read_key(j, "hx2_ua", c.hx2_ua);
  read_key(j, "loss_ua", c.loss_ua);
  read_key(j, "ambient_temp", c.ambient_temp);
  read_key(j, "sink_inlet_temp", c.sink_inlet_temp);
  read_key(j, "sink_flow", c.sink_flow);
  read_key(j, "pressure_ref", c.pressure_ref);
  read_key(j, "pressure_coef", c.pressure_coef);
  read_key(j, "heater_voltage_nominal", c.heater_voltage_nominal);
  read_key(j, "dt", c.dt);
}

}  // namespace

PlantConfig load_plant_config(const std::filesystem::path &path) {
  const json j = read_json(path);
  PlantConfig c;
  try {
    apply_plant_config(j.contains("plant") ? j.at("plant") : j, c);
  } catch (const json::exception &e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

Scenario load_scenario(const std::filesystem::path &path) {
  const json root = read_json(path);
  const json &j = root.contains("scenario") ? root.at("scenario") : root;
  Scenario s;
  try {
    const std::string preset = j.value("preset", "");
    if (preset == "staircase") {
      s = staircase_scenario(j.value("plateau", 2400.0));
    } else if (preset == "demand") {
      s = demand_scenario(j.value("steps", std::size_t{3706}), j.value("seed", std::uint64_t{0}),
                          j.value("noise_enabled", true));
    } else if (!preset.empty()) {
      throw Error(Errc::InvalidConfig, "unknown scenario preset: " + preset);
    }
    read_key(j, "duration", s.duration);
    read_key(j, "dt", s.dt);
    read_key(j, "noise_enabled", s.noise_enabled);
    read_key(j, "seed", s.seed);
    if (auto it = j.find("mode"); it != j.end()) {
      const auto mode = it->get<std::string>();
      if (mode == "manual") s.mode = ControlMode::Manual;
      else if (mode == "demand") s.mode = ControlMode::Demand;
      else throw Error(Errc::InvalidConfig, "unknown mode: " + mode);
    }
    if (auto it = j.find("schedule"); it != j.end()) {
      s.schedule.clear();
      for (const auto &e : *it) {
        ScheduleEvent ev;
        ev.t = e.at("t").get<double>();
        auto opt = [&](const char *key, std::optional<double> &out) {
          if (e.contains(key)) out = e.at(key).get<double>();
        };
        opt("heater_ao", ev.heater_ao);
        opt("pump1_ao", ev.pump1_ao);
        opt("pump2_ao", ev.pump2_ao);
        opt("cr_ao", ev.cr_ao);
        opt("demand", ev.demand);
        s.schedule.push_back(ev);
      }
    }
    if (!s.initial) s.initial = idle_state(PlantConfig{});
  } catch (const json::exception &e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  s.validate();
  return s;
}

}  // namespace thermotwin
