// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive rollout of the surrogate, steady-state detection and
// closed-loop control of the plant simulator.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "thermotwin/channels.hpp"
#include "thermotwin/gru.hpp"
#include "thermotwin/plant.hpp"

namespace thermotwin {

using ControlActions = Commands;

struct SteadyState {
  bool converged = false;
  std::size_t step = 0;
};

/// `trajectory` rows are frames in normalized units. Converged at the first
/// row i >= window where the last `window` per-step changes of every channel
/// stay below eps.
SteadyState detect_steady_state(const Matrix &trajectory, double eps = 1e-3,
                                std::size_t window = 30);

struct RolloutOptions {
  std::size_t max_steps = 1000;
  double eps = 1e-3;
  std::size_t window = 30;
};

struct RolloutResult {
  Trajectory trajectory;  // one predicted frame per simulated second
  std::size_t steps_run = 0;
  bool converged = false;
  std::size_t convergence_step = 0;
  double wall_clock_s = 0.0;
  double speedup = 0.0;
};

/// Packs the last 30 frames of `history` into a 30 x 26 physical-unit window.
Matrix history_window(const Trajectory &history, std::size_t steps = 30);

/// init_window: T_e x 26 in physical units. Demand is held at `demand` kW.
RolloutResult rollout(InferenceEngine &engine, const Matrix &init_window, double demand,
                      const RolloutOptions &options = {});
RolloutResult rollout(const GruModel &model, const Matrix &init_window, double demand,
                      const RolloutOptions &options = {});

nlohmann::json speedup_report(const RolloutResult &result);

/// Clamps to actuator ranges and limits the rod move from `rod_position`
/// to the slew rate over `dt` seconds.
ControlActions clamp_actions(const ControlActions &raw, double rod_position, double dt,
                             const PlantConfig &config);

/// A plant instance driven at 1 Hz with its measured history.
struct PlantSession {
  PlantConfig config;
  PlantState state;
  Trajectory history;
  Rng rng;
  bool noise_enabled = false;

  PlantSession(const PlantConfig &config, const PlantState &initial, std::uint64_t seed = 0,
               bool noise_enabled = false);

  /// Applies `commands` for one second and records the measured frame.
  const SensorFrame &advance(const ControlActions &commands, double demand);
};

/// Measured frames of the idle facility: the cold-start history for a rollout.
Trajectory cold_start_history(const PlantConfig &config, std::size_t frames = 30,
                              std::uint64_t seed = 0, bool noise_enabled = true);

/// Runs the noiseless plant under the demand controller from idle until every
/// temperature moves less than `tol` degC/s over `window` seconds.
struct PlantSteady {
  SensorFrame frame;
  double seconds = 0.0;
  bool converged = false;
};
PlantSteady plant_steady_state(const PlantConfig &config, double demand,
                               double max_seconds = 7200.0, double tol = 1e-4,
                               std::size_t window = 60);

/// Predicts the next actions from the last 30 frames, clamps them and
/// applies them to the plant for one second.
ControlActions closed_loop_step(PlantSession &plant, InferenceEngine &engine, double demand);

}  // namespace thermotwin
