// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/twin.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "thermotwin/error.hpp"

namespace thermotwin {

SteadyState detect_steady_state(const Matrix &trajectory, double eps, std::size_t window) {
  if (window < 2) throw Error(Errc::InvalidConfig, "steady-state window must be >= 2");
  std::size_t quiet = 0;
  for (std::size_t i = 1; i < trajectory.rows(); ++i) {
    double worst = 0.0;
    for (std::size_t c = 0; c < trajectory.cols(); ++c)
      worst = std::max(worst, std::abs(trajectory(i, c) - trajectory(i - 1, c)));
    quiet = worst < eps ? quiet + 1 : 0;
    if (quiet >= window) return {true, i};
  }
  return {false, 0};
}

Matrix history_window(const Trajectory &history, std::size_t steps) {
  if (history.size() < steps)
    throw Error(Errc::ColdStart, "need " + std::to_string(steps) + " frames of history, have " +
                                     std::to_string(history.size()));
  Matrix w(steps, kInputDim);
  for (std::size_t i = 0; i < steps; ++i) {
    const auto row = pack_input(history[history.size() - steps + i]);
    std::copy(row.begin(), row.end(), w.row(i).begin());
  }
  return w;
}

namespace {

void check_engine(const InferenceEngine &engine) {
  const auto &d = engine.dims();
  const auto &n = engine.norm();
  if (d.input != kInputDim || d.output != kOutputDim)
    throw Error(Errc::ShapeMismatch, "model does not use the facility channel layout");
  if (n.in_mean.size() != kInputDim || n.out_mean.size() != kOutputDim)
    throw Error(Errc::InvalidConfig, "model carries no normalization statistics");
}

}  // namespace

RolloutResult rollout(InferenceEngine &engine, const Matrix &init_window, double demand,
                      const RolloutOptions &options) {
  check_engine(engine);
  const auto &d = engine.dims();
  const auto &n = engine.norm();
  const std::size_t T = d.input_steps;
  if (init_window.rows() != T || init_window.cols() != kInputDim)
    throw Error(Errc::ShapeMismatch, "initial window must be " + std::to_string(T) + " x " +
                                         std::to_string(kInputDim));
  if (!(demand >= 0.0) || !std::isfinite(demand))
    throw Error(Errc::OutOfRange, "demand must be finite and >= 0");
  if (options.window < 2) throw Error(Errc::InvalidConfig, "steady-state window must be >= 2");

  std::vector<float> window(T * kInputDim);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < kInputDim; ++c)
      window[t * kInputDim + c] =
          static_cast<float>((init_window(t, c) - n.in_mean[c]) / n.in_std[c]);
  const float demand_norm =
      static_cast<float>((demand - n.in_mean[kMeasuredCount]) / n.in_std[kMeasuredCount]);

  // Previous frame's measured channels in output units, for the detector.
  std::vector<double> prev(kMeasuredCount);
  for (std::size_t c = 0; c < kMeasuredCount; ++c)
    prev[c] = (init_window(T - 1, c) - n.out_mean[c]) / n.out_std[c];

  std::vector<float> out(d.head_rows());
  std::vector<double> phys(kOutputDim);
  RolloutResult result;
  result.trajectory.reserve(options.max_steps);
  std::size_t quiet = 0;

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 1; k <= options.max_steps; ++k) {
    engine.predict(window, out);
    double worst = 0.0;
    for (std::size_t c = 0; c < kOutputDim; ++c) {
      if (!std::isfinite(out[c]))
        throw Error(Errc::NonFinitePrediction, "step " + std::to_string(k));
      phys[c] = out[c] * n.out_std[c] + n.out_mean[c];
      if (c < kMeasuredCount) {
        worst = std::max(worst, std::abs(out[c] - prev[c]));
        prev[c] = out[c];
      }
    }
    std::copy(window.begin() + kInputDim, window.end(), window.begin());
    float *row = window.data() + (T - 1) * kInputDim;
    for (std::size_t c = 0; c < kMeasuredCount; ++c)
      row[c] = static_cast<float>((phys[c] - n.in_mean[c]) / n.in_std[c]);
    row[kMeasuredCount] = demand_norm;

    result.trajectory.push_back(unpack_output(phys, static_cast<double>(k), demand));
    result.steps_run = k;
    quiet = worst < options.eps ? quiet + 1 : 0;
    if (quiet >= options.window) {
      result.converged = true;
      result.convergence_step = k;
      break;
    }
  }
  result.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.speedup = result.wall_clock_s > 0.0
                       ? static_cast<double>(result.steps_run) / result.wall_clock_s
                       : 0.0;
  return result;
}

RolloutResult rollout(const GruModel &model, const Matrix &init_window, double demand,
                      const RolloutOptions &options) {
  InferenceEngine engine(model);
  return rollout(engine, init_window, demand, options);
}

nlohmann::json speedup_report(const RolloutResult &result) {
  nlohmann::json j;
  j["steps"] = result.steps_run;
  j["converged"] = result.converged;
  j["convergence_step"] =
      result.converged ? nlohmann::json(result.convergence_step) : nlohmann::json(nullptr);
  j["wall_clock_s"] = result.wall_clock_s;
  j["speedup"] = result.speedup;
  nlohmann::json finals = nlohmann::json::object();
  if (!result.trajectory.empty()) {
    const auto &last = result.trajectory.back();
    for (const auto &[id, v] : last.values) finals[id] = v;
    for (const auto &[id, v] : last.actuators) finals[id] = v;
  }
  j["final_values"] = std::move(finals);
  return j;
}

ControlActions clamp_actions(const ControlActions &raw, double rod_position, double dt,
                             const PlantConfig &config) {
  auto clean = [](double v, double lo, double hi) {
    if (!std::isfinite(v)) return lo;
    return std::clamp(v, lo, hi);
  };
  ControlActions a;
  a.heater_ao = clean(raw.heater_ao, 0.0, 100.0);
  a.pump1_ao = clean(raw.pump1_ao, 0.0, config.pump_max_freq);
  a.pump2_ao = clean(raw.pump2_ao, 0.0, config.pump_max_freq);
  const double reach = config.rod_slew_pct() * dt;
  const double rod = std::isfinite(raw.cr_ao) ? raw.cr_ao : rod_position;
  a.cr_ao = std::clamp(std::clamp(rod, 0.0, 100.0), std::max(0.0, rod_position - reach),
                       std::min(100.0, rod_position + reach));
  return a;
}

PlantSession::PlantSession(const PlantConfig &cfg, const PlantState &initial, std::uint64_t seed,
                           bool noise)
    : config(cfg), state(initial), rng(seed), noise_enabled(noise) {
  config.validate();
  history.push_back(measure(state, config, noise_enabled, rng));
}

const SensorFrame &PlantSession::advance(const ControlActions &commands, double demand) {
  const auto substeps = static_cast<int>(std::lround(1.0 / config.dt));
  for (int i = 0; i < substeps; ++i) state = step(state, commands, demand, config.dt, config);
  history.push_back(measure(state, config, noise_enabled, rng));
  return history.back();
}

Trajectory cold_start_history(const PlantConfig &config, std::size_t frames, std::uint64_t seed,
                              bool noise_enabled) {
  PlantSession session(config, idle_state(config), seed, noise_enabled);
  while (session.history.size() < frames) session.advance(session.state.applied, 0.0);
  return session.history;
}

PlantSteady plant_steady_state(const PlantConfig &config, double demand, double max_seconds,
                               double tol, std::size_t window) {
  PlantSession session(config, idle_state(config));
  DemandController controller;
  const auto substeps = static_cast<int>(std::lround(1.0 / config.dt));
  std::size_t quiet = 0;
  PlantSteady out;
  for (double t = 1.0; t <= max_seconds; t += 1.0) {
    const PlantState before = session.state;
    for (int i = 0; i < substeps; ++i) {
      const Commands cmd = controller.update(session.state, demand, config.dt, config);
      session.state = step(session.state, cmd, demand, config.dt, config);
    }
    double worst = 0.0;
    for (std::size_t n = 0; n < kFluidNodes; ++n)
      worst = std::max(worst, std::abs(session.state.fluid[n] - before.fluid[n]));
    for (std::size_t n = 0; n < kHeaterNodes; ++n)
      worst = std::max(worst, std::abs(session.state.sheath[n] - before.sheath[n]));
    quiet = worst < tol ? quiet + 1 : 0;
    out.seconds = t;
    if (quiet >= window) {
      out.converged = true;
      break;
    }
  }
  out.frame = measure(session.state, config, false, session.rng);
  return out;
}

ControlActions closed_loop_step(PlantSession &plant, InferenceEngine &engine, double demand) {
  check_engine(engine);
  const auto &d = engine.dims();
  const auto &n = engine.norm();
  Matrix window = history_window(plant.history, d.input_steps);
  std::vector<float> x(window.size());
  for (std::size_t t = 0; t < window.rows(); ++t)
    for (std::size_t c = 0; c < kInputDim; ++c)
      x[t * kInputDim + c] = static_cast<float>((window(t, c) - n.in_mean[c]) / n.in_std[c]);
  // The newest frame carries the demand the controller is asked to meet.
  x[(window.rows() - 1) * kInputDim + kMeasuredCount] =
      static_cast<float>((demand - n.in_mean[kMeasuredCount]) / n.in_std[kMeasuredCount]);

  std::vector<float> out(d.head_rows());
  engine.predict(x, out);
  double act[kActuatorCount];
  for (std::size_t a = 0; a < kActuatorCount; ++a) {
    const std::size_t c = kMeasuredCount + a;
    if (!std::isfinite(out[c])) throw Error(Errc::NonFinitePrediction, "actuator output");
    act[a] = out[c] * n.out_std[c] + n.out_mean[c];
  }
  const ControlActions applied = clamp_actions({act[0], act[1], act[2], act[3]},
                                               plant.state.rod_position, 1.0, plant.config);
  plant.advance(applied, demand);
  return applied;
}

}  // namespace thermotwin
