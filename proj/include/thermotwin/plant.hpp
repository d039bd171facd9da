// SPDX-License-Identifier: Apache-2.0
//
// Lumped-parameter model of the three-loop facility.
//
//   primary   TF11 -> [heaters] TF12 -> TF13 -> TF14 -> HX1 -> TF15 -> TF11
//   secondary TF21 -> HX1 -> TF22 -> TF23 -> TF24 -> HX2 -> TF25 -> TF21
//   sink      TF31 (supply boundary) -> HX2 -> TF32
//
// Every fluid node obeys C dT/dt = mdot cp (T_up - T) + Q - UA_loss (T - T_amb).
// Heater sheaths TH1..TH4 lag the test-section outlet with their own hA.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "thermotwin/channels.hpp"

namespace thermotwin {

inline constexpr std::size_t kFluidNodes = 12;   // TF11..TF25, TF31, TF32
inline constexpr std::size_t kHeaterNodes = 4;   // TH1..TH4
inline constexpr std::size_t kSinkInletNode = 10;

struct PlantConfig {
  double heater_max_power = 15700.0;  // W, 4 x 3925
  double pump_max_flow = 0.76;        // kg/s at pump_max_freq
  double pump_max_freq = 60.0;        // Hz
  double vfd_resolution = 0.1;        // Hz
  double rod_stroke = 609.6;          // mm
  double rod_speed = 50.8;            // mm/s
  double heater_power_resolution = 5.0;  // %
  double conversion_efficiency = 0.45;
  double cp = 4180.0;  // J/(kg K)

  // J/K per fluid node, indexed like kFluidNodes; the TF31 entry is unused.
  std::array<double, kFluidNodes> node_thermal_masses = {
      6500, 8100, 6500, 6500, 6500, 5800, 5800, 5800, 5800, 5800, 0, 3800};
  std::array<double, kHeaterNodes> sheath_hA = {24.0, 24.2, 23.8, 23.6};  // W/K
  double sheath_time_constant = 20.0;                                    // s
  double hx1_ua = 2600.0;  // W/K
  double hx2_ua = 2200.0;  // W/K
  // W/K per fluid node.
  std::array<double, kFluidNodes> loss_ua = {10, 14, 12, 12, 10, 7, 8, 8, 8, 7, 0, 4};
  double ambient_temp = 26.25;      // degC
  double sink_inlet_temp = 26.25;   // degC, TF31 boundary
  double sink_flow = 0.1018;        // kg/s, FT3

  // P = ref + coef * mdot^2, kPa; PT1..PT3 follow the primary flow, PT4 the secondary.
  std::array<double, 4> pressure_ref = {112.5, 106.0, 100.0, 100.0};
  std::array<double, 4> pressure_coef = {22.0, 18.0, 2.0, 3.0};

  double heater_voltage_nominal = 208.0;  // V at full command
  double dt = 0.1;                        // s, internal integration step

  double rod_slew_pct() const { return rod_speed / rod_stroke * 100.0; }
  void validate() const;
};

struct Commands {
  double heater_ao = 0.0;  // %
  double pump1_ao = 0.0;   // Hz
  double pump2_ao = 0.0;   // Hz
  double cr_ao = 100.0;    // % inserted

  bool operator==(const Commands &) const = default;
};

struct PlantState {
  double t = 0.0;
  std::array<double, kFluidNodes> fluid{};
  std::array<double, kHeaterNodes> sheath{};
  double rod_position = 100.0;  // % inserted
  Commands applied;             // quantized commands in effect
  double demand_elec = 0.0;     // kW

  bool operator==(const PlantState &) const = default;
};

/// Channel-level view of a state, derived from the nodes.
struct PlantOutputs {
  std::array<double, 3> flows{};      // kg/s
  std::array<double, 4> pressures{};  // kPa
  double heat_power = 0.0;            // W delivered to the primary fluid
  double sink_removal = 0.0;          // W removed by the tertiary loop
  double elec_power = 0.0;            // W
  double losses = 0.0;                // W to ambient
  double heater_voltage = 0.0;        // V
  double heater_current = 0.0;        // A
};

double rod_power_factor(double position);
double pump_flow(double freq, const PlantConfig &config = {});
double hx_heat_rate(double t_hot_in, double t_cold_in, double mdot_hot, double mdot_cold,
                    double ua, double cp = 4180.0);

double quantize_heater(double pct, const PlantConfig &config);
double quantize_pump(double hz, const PlantConfig &config);

/// All nodes at ambient, pumps and heater off, rod withdrawn.
PlantState ambient_state(const PlantConfig &config);
/// Pumps idling at the facility's standby flows, heater off, rod fully inserted.
PlantState idle_state(const PlantConfig &config);

PlantOutputs outputs(const PlantState &state, const PlantConfig &config);

PlantState step(const PlantState &state, const Commands &commands, double demand, double dt,
                const PlantConfig &config);

using Rng = std::mt19937_64;

SensorFrame measure(const PlantState &state, const PlantConfig &config, bool noise_enabled,
                    Rng &rng);

/// Feed-forward controller used for dataset generation and as the twin oracle:
/// heat target = demand / efficiency + current losses, ramp limited. The heater
/// runs at full command once energized and the rod trims it to the target.
class DemandController {
 public:
  struct Params {
    double ramp = 50.0;             // W/s on the heat target
    double pump1_base = 10.0;       // Hz
    double pump2_base = 9.7;        // Hz
    double pump_gain = 2.0;         // Hz per kW of demand
    double pump_ramp = 0.5;         // Hz/s
  };

  DemandController() = default;
  explicit DemandController(Params params) : params_(params) {}

  Commands update(const PlantState &state, double demand, double dt, const PlantConfig &config);
  void reset(const PlantState &state, const PlantConfig &config);

 private:
  Params params_{};
  double heat_target_ = 0.0;
  bool energized_ = false;
  double pump1_ = -1.0;
  double pump2_ = -1.0;
};

enum class ControlMode { Manual, Demand };

struct ScheduleEvent {
  double t = 0.0;
  std::optional<double> heater_ao;
  std::optional<double> pump1_ao;
  std::optional<double> pump2_ao;
  std::optional<double> cr_ao;
  std::optional<double> demand;
};

struct Scenario {
  double duration = 0.0;  // s
  double dt = 0.1;        // s
  std::vector<ScheduleEvent> schedule;
  bool noise_enabled = false;
  std::uint64_t seed = 0;
  ControlMode mode = ControlMode::Manual;
  std::optional<PlantState> initial;

  void validate() const;
};

/// One frame per simulated second, t = 0 .. duration.
Trajectory run_scenario(const PlantConfig &config, const Scenario &scenario,
                        std::vector<PlantState> *states = nullptr);

/// Heater command and rod insertion that deliver exactly `watts`.
Commands commands_for_power(double watts, const PlantConfig &config, double pump1 = 10.0,
                            double pump2 = 9.7);

/// Four plateaus at 490, 1692, 4536 and 9220 W.
Scenario staircase_scenario(double plateau = 2400.0);

/// Seeded piecewise-constant electric demand in [0, 3] kW under the demand controller.
Scenario demand_scenario(std::size_t steps, std::uint64_t seed, bool noise_enabled = true);

PlantConfig load_plant_config(const std::filesystem::path &path);
Scenario load_scenario(const std::filesystem::path &path);

}  // namespace thermotwin
