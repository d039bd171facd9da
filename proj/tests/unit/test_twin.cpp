// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "thermotwin/error.hpp"
#include "thermotwin/twin.hpp"

using namespace thermotwin;

namespace {

void identity_norm(GruModel &m) {
  m.norm.in_mean.assign(kInputDim, 0.0);
  m.norm.in_std.assign(kInputDim, 1.0);
  m.norm.out_mean.assign(kOutputDim, 0.0);
  m.norm.out_std.assign(kOutputDim, 1.0);
}

GruModel small_model(std::uint64_t seed) {
  GruModel m = make_model({kInputDim, 8, 1, 30, 10, kOutputDim}, seed);
  m.norm.in_mean.assign(kInputDim, 30.0);
  m.norm.in_std.assign(kInputDim, 5.0);
  m.norm.out_mean.assign(kOutputDim, 30.0);
  m.norm.out_std.assign(kOutputDim, 5.0);
  return m;
}

// Model that always predicts the same physical frame.
GruModel constant_model(std::span<const double> frame) {
  GruModel m = make_model({kInputDim, 8, 1, 30, 10, kOutputDim}, 1);
  identity_norm(m);
  m.params.head_w.fill(0.0);
  for (std::size_t k = 0; k < 10; ++k)
    for (std::size_t c = 0; c < kOutputDim; ++c) m.params.head_b[k * kOutputDim + c] = frame[c];
  return m;
}

Matrix flat_window(double v) { return Matrix(30, kInputDim, v); }

}  // namespace

TEST_CASE("steady-state detector") {
  SUBCASE("constant trajectory converges at the window length") {
    const SteadyState s = detect_steady_state(Matrix(100, 25, 1.0), 1e-3, 30);
    CHECK(s.converged);
    CHECK(s.step == 30);
  }
  SUBCASE("ramp steeper than eps never converges") {
    Matrix m(500, 3);
    for (std::size_t t = 0; t < 500; ++t) m(t, 1) = 2e-3 * double(t);
    CHECK_FALSE(detect_steady_state(m, 1e-3, 30).converged);
  }
  SUBCASE("exponential decay crosses at the closed-form slope threshold") {
    const double a = 5.0, tau = 60.0, eps = 1e-3;
    const std::size_t window = 30;
    Matrix m(2000, 2);
    for (std::size_t t = 0; t < 2000; ++t) m(t, 0) = a * std::exp(-double(t) / tau);
    const SteadyState s = detect_steady_state(m, eps, window);
    REQUIRE(s.converged);
    const double crossing = tau * std::log(a / (eps * tau));
    CHECK(std::abs(double(s.step) - crossing) <= double(window) + 1.0);
  }
  SUBCASE("window below two is rejected") {
    CHECK_THROWS_AS(detect_steady_state(Matrix(10, 2), 1e-3, 1), Error);
  }
}

TEST_CASE("rollout at a fixed point converges without drift") {
  std::vector<double> frame(kOutputDim);
  for (std::size_t c = 0; c < kOutputDim; ++c) frame[c] = 20.0 + double(c);
  const GruModel m = constant_model(frame);
  Matrix w(30, kInputDim);
  for (std::size_t t = 0; t < 30; ++t)
    for (std::size_t c = 0; c < kMeasuredCount; ++c) w(t, c) = frame[c];
  const RolloutResult r = rollout(m, w, 1.0, {200, 1e-3, 30});
  CHECK(r.converged);
  CHECK(r.convergence_step == 30);
  CHECK(r.steps_run == 30);
  CHECK(r.trajectory.size() == 30);
  for (const auto &f : r.trajectory) {
    CHECK(f.value("TF11") == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(f.demand_elec == 1.0);
  }
}

TEST_CASE("strict tolerance runs to the step limit") {
  const GruModel m = small_model(3);
  const RolloutResult r = rollout(m, flat_window(30.0), 1.0, {10, 1e-12, 30});
  CHECK_FALSE(r.converged);
  CHECK(r.steps_run == 10);
  CHECK(r.trajectory.size() == 10);
}

TEST_CASE("rollout slides the window one predicted frame at a time") {
  const GruModel m = small_model(5);
  Matrix w(30, kInputDim);
  for (std::size_t t = 0; t < 30; ++t)
    for (std::size_t c = 0; c < kInputDim; ++c) w(t, c) = 25.0 + 0.1 * double(t) + double(c % 5);
  const double demand = 1.5;
  const RolloutResult r = rollout(m, w, demand, {40, 0.0, 30});
  REQUIRE(r.steps_run == 40);

  // Double-precision oracle of the same receding-horizon loop.
  Matrix win = w;
  for (std::size_t k = 0; k < 40; ++k) {
    Matrix z(30, kInputDim);
    for (std::size_t t = 0; t < 30; ++t)
      for (std::size_t c = 0; c < kInputDim; ++c)
        z(t, c) = (win(t, c) - m.norm.in_mean[c]) / m.norm.in_std[c];
    const Matrix p = predict(m, z);
    std::vector<double> next(kInputDim);
    for (std::size_t c = 0; c < kMeasuredCount; ++c)
      next[c] = p(0, c) * m.norm.out_std[c] + m.norm.out_mean[c];
    next[kMeasuredCount] = demand;
    for (std::size_t c = 0; c < kMeasuredCount; ++c)
      REQUIRE(std::abs(r.trajectory[k].value(canonical_catalog().measured()[c]) - next[c]) < 1e-3);
    for (std::size_t t = 0; t + 1 < 30; ++t)
      for (std::size_t c = 0; c < kInputDim; ++c) win(t, c) = win(t + 1, c);
    for (std::size_t c = 0; c < kInputDim; ++c) win(29, c) = next[c];
  }
}

TEST_CASE("rollout is deterministic apart from timing") {
  const GruModel m = small_model(7);
  const RolloutResult a = rollout(m, flat_window(31.0), 2.0, {50, 1e-3, 30});
  const RolloutResult b = rollout(m, flat_window(31.0), 2.0, {50, 1e-3, 30});
  CHECK(a.trajectory == b.trajectory);
  CHECK(a.steps_run == b.steps_run);
  CHECK(a.wall_clock_s > 0.0);
}

TEST_CASE("rollout input checks") {
  const GruModel m = small_model(8);
  CHECK_THROWS_AS(rollout(m, Matrix(29, kInputDim), 1.0), Error);
  CHECK_THROWS_AS(rollout(m, flat_window(30.0), -1.0), Error);
  GruModel bad = m;
  bad.params.head_b[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    rollout(bad, flat_window(30.0), 1.0, {5, 1e-3, 30});
    FAIL("expected NonFinitePrediction");
  } catch (const Error &e) {
    CHECK(e.code() == Errc::NonFinitePrediction);
  }
}

TEST_CASE("speedup report") {
  RolloutResult r;
  r.steps_run = 345;
  r.converged = true;
  r.convergence_step = 345;
  r.wall_clock_s = 0.575;
  r.speedup = 345.0 / 0.575;
  r.trajectory.resize(345);
  r.trajectory.back().values["TF12"] = 37.71;
  const auto j = speedup_report(r);
  CHECK(j["speedup"].get<double>() == doctest::Approx(600.0));
  CHECK(j["steps"] == 345);
  CHECK(j["convergence_step"] == 345);
  CHECK(j["final_values"]["TF12"] == 37.71);
  for (const char *key : {"steps", "converged", "convergence_step", "wall_clock_s", "speedup", "final_values"})
    CHECK(j.contains(key));

  RolloutResult slow;
  slow.steps_run = 100;
  slow.wall_clock_s = 100.0;
  slow.speedup = 1.0;
  CHECK(speedup_report(slow)["speedup"] == 1.0);
  CHECK(speedup_report(slow)["convergence_step"].is_null());
}

TEST_CASE("action clamps") {
  const PlantConfig c;
  const double slew = 50.8 / 609.6 * 100.0;
  const ControlActions a = clamp_actions({120.0, 75.0, -3.0, 0.0}, 100.0, 1.0, c);
  CHECK(a.heater_ao == 100.0);
  CHECK(a.pump1_ao == 60.0);
  CHECK(a.pump2_ao == 0.0);
  CHECK(a.cr_ao == doctest::Approx(100.0 - slew));
  const ControlActions nan = clamp_actions({NAN, NAN, 30.0, NAN}, 40.0, 1.0, c);
  CHECK(nan.heater_ao == 0.0);
  CHECK(nan.pump1_ao == 0.0);
  CHECK(nan.cr_ao == 40.0);
  CHECK(clamp_actions({50.0, 10.0, 10.0, 42.0}, 40.0, 1.0, c).cr_ao == 42.0);
}

TEST_CASE("closed loop applies clamped predictions") {
  const PlantConfig c;
  PlantSession plant(c, idle_state(c));
  std::vector<double> frame(kOutputDim, 26.0);
  frame[kMeasuredCount + 0] = 100.0;  // heater
  frame[kMeasuredCount + 1] = 75.0;   // pump 1
  frame[kMeasuredCount + 2] = 20.0;   // pump 2
  frame[kMeasuredCount + 3] = 0.0;    // rod
  InferenceEngine engine(constant_model(frame));

  try {
    closed_loop_step(plant, engine, 1.0);
    FAIL("expected ColdStart");
  } catch (const Error &e) {
    CHECK(e.code() == Errc::ColdStart);
  }
  while (plant.history.size() < 30) plant.advance(plant.state.applied, 0.0);

  const double slew = 50.8 / 609.6 * 100.0;
  const ControlActions a = closed_loop_step(plant, engine, 1.0);
  CHECK(a.pump1_ao == 60.0);
  CHECK(a.pump2_ao == doctest::Approx(20.0));
  CHECK(a.cr_ao == doctest::Approx(100.0 - slew));
  CHECK(plant.state.rod_position == doctest::Approx(100.0 - slew));
  CHECK(plant.history.size() == 31);
  CHECK(plant.history.back().actuators.at("Pump1_AO") == 60.0);
}

TEST_CASE("cold-start history and plant oracle") {
  const PlantConfig c;
  const Trajectory h = cold_start_history(c, 30, 1);
  CHECK(h.size() == 30);
  CHECK(history_window(h).rows() == 30);
  CHECK_THROWS_AS(history_window(Trajectory(h.begin(), h.begin() + 10)), Error);

  const PlantSteady s = plant_steady_state(c, 1.889);
  CHECK(s.converged);
  CHECK(s.frame.value("Elec_Power") == doctest::Approx(1.889).epsilon(0.02));
  CHECK(s.frame.value("Heat_Power") > 1.889 / 0.45);
}
