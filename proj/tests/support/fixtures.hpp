// SPDX-License-Identifier: Apache-2.0
//
// Reference frames shared by the assistant tests and the acceptance run.
#pragma once

#include <fstream>
#include <iterator>
#include <string>

#include "thermotwin/assistant.hpp"
#include "thermotwin/channels.hpp"

namespace fixtures {

/// Idle facility reading: rod fully inserted, heater slightly energized.
inline thermotwin::SensorFrame idle_reading() {
  thermotwin::SensorFrame f;
  f.values = {{"TF11", 26.36}, {"TF12", 26.39}, {"TF13", 26.39}, {"TF14", 26.38},
              {"TF15", 26.36}, {"TF21", 26.32}, {"TF22", 26.39}, {"TF23", 26.38},
              {"TF24", 26.38}, {"TF25", 26.33}, {"TF31", 26.25}, {"TF32", 26.38},
              {"TH1", 26.65},  {"TH2", 26.65},  {"TH3", 26.65},  {"TH4", 26.65},
              {"PT1", 112.86}, {"PT2", 106.29}, {"PT3", 100.03}, {"PT4", 100.05},
              {"FT1", 0.1269}, {"FT2", 0.1227}, {"FT3", 0.1018}, {"Heat_Power", 0.0},
              {"Elec_Power", 0.0}};
  f.actuators = {{"Heater_AO", 0.0}, {"Pump1_AO", 10.0}, {"Pump2_AO", 9.7}, {"CR_AO", 100.0}};
  f.aux = {{"Heater_V", 35.78}, {"Heater_I", 0.72}, {"CR_Pos", 100.0}};
  return f;
}

/// Twin expectation for a 1.89 kW demand.
inline thermotwin::TwinExpectation demand_expectation() {
  thermotwin::TwinExpectation t;
  t.demand_kw = 1.889;
  auto &f = t.frame;
  f.values = {{"TF11", 29.38}, {"TF12", 37.71}, {"TF13", 37.05}, {"TF14", 37.48},
              {"TF15", 29.34}, {"TF21", 28.08}, {"TF22", 34.48}, {"TF23", 34.37},
              {"TF24", 33.92}, {"TF25", 28.05}, {"TF31", 26.25}, {"TF32", 32.05},
              {"TH1", 89.63},  {"TH2", 89.52},  {"TH3", 89.95},  {"TH4", 90.19},
              {"PT1", 109.67}, {"PT2", 104.36}, {"PT3", 97.67},  {"PT4", 99.56},
              {"FT1", 0.1275}, {"FT2", 0.1228}, {"FT3", 0.1018}, {"Heat_Power", 5.332},
              {"Elec_Power", 1.889}};
  f.actuators = {{"Heater_AO", 100.0}, {"Pump1_AO", 10.0}, {"Pump2_AO", 9.7}, {"CR_AO", 65.91}};
  f.demand_elec = 1.889;
  return t;
}

inline std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace fixtures
