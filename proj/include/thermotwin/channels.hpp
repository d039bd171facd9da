// SPDX-License-Identifier: Apache-2.0
//
// Channel catalog of the three-loop facility and the fixed vector layouts
// used by the surrogate: 26 inputs (25 measured + electric demand) and
// 29 outputs (25 measured + 4 actuator commands).
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace thermotwin {

enum class ChannelGroup { Temperature, Pressure, Flow, Power, Demand, Actuator, Auxiliary };

enum class NoiseKind {
  None,      // commands and set-points
  Absolute,  // sigma in channel units
  Relative,  // sigma as a fraction of the reading
  Uniform,   // uniform +-uncertainty, in channel units
};

enum class SamplingClass { Critical, Auxiliary };

struct ChannelSpec {
  std::string id;
  ChannelGroup group;
  std::string unit;
  double max_value;
  double uncertainty;
  NoiseKind noise;
  SamplingClass sampling;
  std::string label;  // human-readable location
};

inline constexpr std::size_t kMeasuredCount = 25;
inline constexpr std::size_t kInputDim = 26;
inline constexpr std::size_t kOutputDim = 29;
inline constexpr std::size_t kActuatorCount = 4;

inline constexpr std::string_view kDemandId = "Demand_Elec";
inline constexpr std::array<std::string_view, kActuatorCount> kActuatorIds = {
    "Heater_AO", "Pump1_AO", "Pump2_AO", "CR_AO"};

/// Heater voltage, heater current and rod-position readback travel with every
/// frame but are not part of the model schema.
inline constexpr std::array<std::string_view, 3> kAuxiliaryIds = {"Heater_V", "Heater_I",
                                                                  "CR_Pos"};

class ChannelCatalog {
 public:
  /// Every channel: 25 measured, then Demand_Elec, then the 4 actuators.
  const std::vector<ChannelSpec> &channels() const { return channels_; }
  const std::vector<ChannelSpec> &auxiliary() const { return auxiliary_; }
  const std::vector<std::string> &input_order() const { return input_order_; }
  const std::vector<std::string> &output_order() const { return output_order_; }
  std::span<const std::string> measured() const {
    return std::span(output_order_).first(kMeasuredCount);
  }

  /// Returns nullptr for unknown ids. Auxiliary channels are included.
  const ChannelSpec *find(std::string_view id) const;
  const ChannelSpec &at(std::string_view id) const;
  std::optional<std::size_t> output_index(std::string_view id) const;

  /// Indices of the output channels belonging to a group.
  std::vector<std::size_t> output_indices(ChannelGroup group) const;

  bool operator==(const ChannelCatalog &other) const;

 private:
  friend const ChannelCatalog &canonical_catalog();
  ChannelCatalog();

  std::vector<ChannelSpec> channels_;
  std::vector<ChannelSpec> auxiliary_;
  std::vector<std::string> input_order_;
  std::vector<std::string> output_order_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

const ChannelCatalog &canonical_catalog();

/// One timestamped readout of every channel.
struct SensorFrame {
  double t = 0.0;
  std::map<std::string, double, std::less<>> values;     // the 25 measured ids
  double demand_elec = 0.0;                              // kW
  std::map<std::string, double, std::less<>> actuators;  // Heater_AO .. CR_AO
  std::map<std::string, double, std::less<>> aux;        // Heater_V, Heater_I, CR_Pos

  double value(std::string_view id) const;
  bool operator==(const SensorFrame &) const = default;
};

using Trajectory = std::vector<SensorFrame>;

std::array<double, kInputDim> pack_input(const SensorFrame &frame);
std::array<double, kOutputDim> pack_output(const SensorFrame &frame);
SensorFrame unpack_output(std::span<const double> packed, double t = 0.0,
                          double demand_elec = 0.0);

/// Dataset CSV: `t`, the 25 measured channels, Demand_Elec, the 4 actuators.
std::string dataset_header();
void write_dataset(const std::filesystem::path &path, const Trajectory &trajectory);
Trajectory read_dataset(const std::filesystem::path &path);

}  // namespace thermotwin
