// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/channels.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "thermotwin/error.hpp"

namespace thermotwin {

namespace {

ChannelSpec fluid(const char *id, const char *label) {
  return {id, ChannelGroup::Temperature, "degC", 220.0, 1.0, NoiseKind::Absolute,
          SamplingClass::Critical, label};
}

ChannelSpec heater(const char *id, const char *label) {
  return {id, ChannelGroup::Temperature, "degC", 750.0, 2.2, NoiseKind::Absolute,
          SamplingClass::Critical, label};
}

ChannelSpec pressure(const char *id, const char *label) {
  return {id, ChannelGroup::Pressure, "kPa", 206.8, 0.01, NoiseKind::Relative,
          SamplingClass::Auxiliary, label};
}

ChannelSpec flow(const char *id, const char *label) {
  return {id, ChannelGroup::Flow, "kg/s", 0.76, 0.05, NoiseKind::Relative,
          SamplingClass::Critical, label};
}

}  // namespace

ChannelCatalog::ChannelCatalog() {
  channels_ = {
      fluid("TF11", "Testsection Inlet Temp"),
      fluid("TF12", "Testsection Outlet Temp"),
      fluid("TF13", "Top Pump Inlet Temp"),
      fluid("TF14", "1st-HX Inlet Temp"),
      fluid("TF15", "1st-HX Outlet Temp"),
      fluid("TF21", "1st-HX 2nd-side Inlet Temp"),
      fluid("TF22", "1st-HX 2nd-side Outlet Temp"),
      fluid("TF23", "Top Pump Inlet Temp"),
      fluid("TF24", "2st-HX Inlet Temp"),
      fluid("TF25", "2st-HX Outlet Temp"),
      fluid("TF31", "HX Inlet Temp"),
      fluid("TF32", "HX Outlet Temp"),
      heater("TH1", "Heater 1"),
      heater("TH2", "Heater 2"),
      heater("TH3", "Heater 3"),
      heater("TH4", "Heater 4"),
      pressure("PT1", "1st Loop Testsection Inlet"),
      pressure("PT2", "1st Loop Testsection Outlet"),
      pressure("PT3", "1st Loop Top"),
      pressure("PT4", "2nd Loop Top"),
      flow("FT1", "1st Loop"),
      flow("FT2", "2nd Loop"),
      flow("FT3", "3rd Loop"),
      {"Heat_Power", ChannelGroup::Power, "kW", 15.7, 0.05, NoiseKind::Relative,
       SamplingClass::Critical, "Applied Heating Power"},
      {"Elec_Power", ChannelGroup::Power, "kW", 15.7 * 0.45, 0.05, NoiseKind::Relative,
       SamplingClass::Auxiliary, "Generated Electric Power"},
      {"Demand_Elec", ChannelGroup::Demand, "kW", 15.7 * 0.45, 0.0, NoiseKind::None,
       SamplingClass::Auxiliary, "Electric Power Demand"},
      {"Heater_AO", ChannelGroup::Actuator, "%", 100.0, 0.0, NoiseKind::None,
       SamplingClass::Critical, "Heater Command"},
      {"Pump1_AO", ChannelGroup::Actuator, "Hz", 60.0, 0.0, NoiseKind::None,
       SamplingClass::Critical, "Primary Pump Command"},
      {"Pump2_AO", ChannelGroup::Actuator, "Hz", 60.0, 0.0, NoiseKind::None,
       SamplingClass::Critical, "Secondary Pump Command"},
      {"CR_AO", ChannelGroup::Actuator, "%", 100.0, 0.0, NoiseKind::None,
       SamplingClass::Critical, "Control Rod Command"},
  };
  auxiliary_ = {
      {"Heater_V", ChannelGroup::Auxiliary, "V", 250.0, 0.005, NoiseKind::Relative,
       SamplingClass::Auxiliary, "Total Heater Voltage"},
      {"Heater_I", ChannelGroup::Auxiliary, "A", 100.0, 0.005, NoiseKind::Relative,
       SamplingClass::Auxiliary, "Total Heater Current"},
      // +-5 % of the 609.6 mm stroke, expressed in percent inserted.
      {"CR_Pos", ChannelGroup::Auxiliary, "%", 100.0, 5.0, NoiseKind::Uniform,
       SamplingClass::Auxiliary, "Control Rod Position"},
  };

  for (std::size_t i = 0; i < kMeasuredCount; ++i) {
    input_order_.push_back(channels_[i].id);
    output_order_.push_back(channels_[i].id);
  }
  input_order_.emplace_back(kDemandId);
  for (auto id : kActuatorIds) output_order_.emplace_back(id);

  for (std::size_t i = 0; i < channels_.size(); ++i) index_.emplace(channels_[i].id, i);
  for (std::size_t i = 0; i < auxiliary_.size(); ++i)
    index_.emplace(auxiliary_[i].id, channels_.size() + i);
}

const ChannelSpec *ChannelCatalog::find(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  return it->second < channels_.size() ? &channels_[it->second]
                                        : &auxiliary_[it->second - channels_.size()];
}

const ChannelSpec &ChannelCatalog::at(std::string_view id) const {
  const ChannelSpec *spec = find(id);
  if (spec == nullptr) throw Error(Errc::MissingChannel, std::string(id));
  return *spec;
}

std::optional<std::size_t> ChannelCatalog::output_index(std::string_view id) const {
  auto it = std::find(output_order_.begin(), output_order_.end(), id);
  if (it == output_order_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - output_order_.begin());
}

std::vector<std::size_t> ChannelCatalog::output_indices(ChannelGroup group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < output_order_.size(); ++i)
    if (at(output_order_[i]).group == group) out.push_back(i);
  return out;
}

bool ChannelCatalog::operator==(const ChannelCatalog &other) const {
  auto same = [](const ChannelSpec &a, const ChannelSpec &b) {
    return a.id == b.id && a.group == b.group && a.unit == b.unit &&
           a.max_value == b.max_value && a.uncertainty == b.uncertainty &&
           a.noise == b.noise && a.sampling == b.sampling && a.label == b.label;
  };
  return std::equal(channels_.begin(), channels_.end(), other.channels_.begin(),
                    other.channels_.end(), same) &&
         std::equal(auxiliary_.begin(), auxiliary_.end(), other.auxiliary_.begin(),
                    other.auxiliary_.end(), same) &&
         input_order_ == other.input_order_ && output_order_ == other.output_order_;
}

const ChannelCatalog &canonical_catalog() {
  static const ChannelCatalog catalog;
  return catalog;
}

double SensorFrame::value(std::string_view id) const {
  if (auto it = values.find(id); it != values.end()) return it->second;
  if (id == kDemandId) return demand_elec;
  if (auto it = actuators.find(id); it != actuators.end()) return it->second;
  if (auto it = aux.find(id); it != aux.end()) return it->second;
  throw Error(Errc::MissingChannel, std::string(id));
}

std::array<double, kInputDim> pack_input(const SensorFrame &frame) {
  const auto &catalog = canonical_catalog();
  std::array<double, kInputDim> out{};
  for (std::size_t i = 0; i < kMeasuredCount; ++i) {
    auto it = frame.values.find(catalog.input_order()[i]);
    if (it == frame.values.end()) throw Error(Errc::MissingChannel, catalog.input_order()[i]);
    out[i] = it->second;
  }
  out[kMeasuredCount] = frame.demand_elec;
  return out;
}

std::array<double, kOutputDim> pack_output(const SensorFrame &frame) {
  const auto &catalog = canonical_catalog();
  std::array<double, kOutputDim> out{};
  for (std::size_t i = 0; i < kMeasuredCount; ++i) {
    auto it = frame.values.find(catalog.output_order()[i]);
    if (it == frame.values.end()) throw Error(Errc::MissingChannel, catalog.output_order()[i]);
    out[i] = it->second;
  }
  for (std::size_t a = 0; a < kActuatorCount; ++a) {
    auto it = frame.actuators.find(kActuatorIds[a]);
    if (it == frame.actuators.end())
      throw Error(Errc::MissingChannel, std::string(kActuatorIds[a]));
    out[kMeasuredCount + a] = it->second;
  }
  return out;
}

SensorFrame unpack_output(std::span<const double> packed, double t, double demand_elec) {
  if (packed.size() != kOutputDim)
    throw Error(Errc::ShapeMismatch, "expected " + std::to_string(kOutputDim) + " values");
  const auto &catalog = canonical_catalog();
  SensorFrame frame;
  frame.t = t;
  frame.demand_elec = demand_elec;
  for (std::size_t i = 0; i < kMeasuredCount; ++i)
    frame.values.emplace(catalog.output_order()[i], packed[i]);
  for (std::size_t a = 0; a < kActuatorCount; ++a)
    frame.actuators.emplace(std::string(kActuatorIds[a]), packed[kMeasuredCount + a]);
  return frame;
}

// ---------------------------------------------------------------------------
// Dataset CSV

namespace {

void append_number(std::string &line, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  line.append(buf, res.ptr);
}

}  // namespace

std::string dataset_header() {
  const auto &catalog = canonical_catalog();
  std::string header = "t";
  for (std::size_t i = 0; i < kMeasuredCount; ++i) header += "," + catalog.output_order()[i];
  header += ",";
  header += kDemandId;
  for (auto id : kActuatorIds) {
    header += ",";
    header += id;
  }
  return header;
}

void write_dataset(const std::filesystem::path &path, const Trajectory &trajectory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ParseError, "cannot open " + path.string() + " for writing");
  out << dataset_header() << '\n';
  std::string line;
  for (const auto &frame : trajectory) {
    line.clear();
    append_number(line, frame.t);
    const auto packed = pack_output(frame);
    for (std::size_t i = 0; i < kMeasuredCount; ++i) {
      line += ',';
      append_number(line, packed[i]);
    }
    line += ',';
    append_number(line, frame.demand_elec);
    for (std::size_t a = 0; a < kActuatorCount; ++a) {
      line += ',';
      append_number(line, packed[kMeasuredCount + a]);
    }
    out << line << '\n';
  }
  if (!out) throw Error(Errc::ParseError, "write failed: " + path.string());
}

Trajectory read_dataset(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::SchemaMismatch, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != dataset_header()) throw Error(Errc::SchemaMismatch, "unexpected header: " + line);

  const auto &catalog = canonical_catalog();
  constexpr std::size_t columns = 1 + kMeasuredCount + 1 + kActuatorCount;
  Trajectory out;
  std::size_t row = 1;
  std::array<double, columns> cells{};
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char *p = line.data();
    const char *end = line.data() + line.size();
    for (std::size_t c = 0; c < columns; ++c) {
      auto res = std::from_chars(p, end, cells[c]);
      if (res.ec != std::errc()) {
        throw Error(Errc::ParseError,
                    "row " + std::to_string(row) + ", column " + std::to_string(c + 1));
      }
      p = res.ptr;
      if (c + 1 < columns) {
        if (p == end || *p != ',')
          throw Error(Errc::ParseError, "row " + std::to_string(row) + ": too few columns");
        ++p;
      }
    }
    if (p != end) throw Error(Errc::ParseError, "row " + std::to_string(row) + ": trailing data");

    SensorFrame frame;
    frame.t = cells[0];
    for (std::size_t i = 0; i < kMeasuredCount; ++i)
      frame.values.emplace(catalog.output_order()[i], cells[1 + i]);
    frame.demand_elec = cells[1 + kMeasuredCount];
    for (std::size_t a = 0; a < kActuatorCount; ++a)
      frame.actuators.emplace(std::string(kActuatorIds[a]), cells[2 + kMeasuredCount + a]);
    out.push_back(std::move(frame));
  }
  return out;
}

}  // namespace thermotwin
