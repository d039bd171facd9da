// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "thermotwin/error.hpp"
#include "gru_oracle.hpp"
#include "thermotwin/gru.hpp"

using namespace thermotwin;

using namespace oracle;

TEST_CASE("hand-evaluated scalar cell") {
  GruDims d{1, 1, 1, 1, 1, 1};
  GruLayerParams p = zero_params(d).layers[0];
  for (Matrix *w : {&p.w_r, &p.w_z, &p.w_h}) (*w)(0, 0) = (*w)(0, 1) = 0.5;
  const std::vector<double> x{1.0}, h{0.2};
  const auto a = cell_forward(x, h, p);
  CHECK(a.r[0] == doctest::Approx(0.64566).epsilon(1e-5));
  CHECK(a.z[0] == doctest::Approx(0.64566).epsilon(1e-5));
  CHECK(a.c[0] == doctest::Approx(0.51137).epsilon(1e-5));
  CHECK(a.h[0] == doctest::Approx(0.40104).epsilon(1e-5));
}

TEST_CASE("zero parameters halve the previous state") {
  GruDims d{3, 4, 1, 1, 1, 1};
  const GruLayerParams p = zero_params(d).layers[0];
  const std::vector<double> x{1.0, -2.0, 3.0}, h{0.4, -0.8, 1.0, 0.0};
  const auto a = cell_forward(x, h, p);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.h[i] == doctest::Approx(0.5 * h[i]));
}

TEST_CASE("saturated update gate takes the candidate") {
  GruDims d{2, 3, 1, 1, 1, 1};
  GruLayerParams p = zero_params(d).layers[0];
  for (double &b : p.b_z) b = 20.0;
  const auto a = cell_forward(std::vector<double>{0.3, 0.1}, std::vector<double>{0.9, -0.7, 0.5}, p);
  for (double v : a.h) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("batched forward matches the unit-by-unit oracle") {
  std::mt19937_64 rng(11);
  for (std::size_t layers = 1; layers <= 3; ++layers) {
    GruDims d{4, 6, layers, 5, 2, 3};
    GruModel m = make_model(d, layers);
    randomize(m, rng);
    std::vector<Matrix> seqs;
    for (int s = 0; s < 3; ++s) seqs.push_back(random_matrix(5, 4, rng));
    const ForwardCache cache = forward(m, batch_of(seqs));
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const auto want = oracle_model(m, seqs[s]);
      for (std::size_t o = 0; o < want.size(); ++o)
        REQUIRE(std::abs(cache.output(s, o) - want[o]) < 1e-10);
    }
    const Matrix p = predict(m, seqs[0]);
    CHECK(p.rows() == d.output_steps);
    CHECK(p.cols() == d.output);
  }
}

TEST_CASE("one layer equals chained cells") {
  std::mt19937_64 rng(2);
  GruDims d{3, 5, 1, 30, 1, 2};
  GruModel m = make_model(d, 9);
  const Matrix seq = random_matrix(30, 3, rng);
  std::vector<double> h(5, 0.0);
  for (std::size_t t = 0; t < 30; ++t) h = cell_forward(seq.row(t), h, m.params.layers[0]).h;
  const auto out = stack_forward(m, seq);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(out.final_hidden[0][i] - h[i]) < 1e-12);
}

TEST_CASE("zero model stays at zero") {
  GruDims d{3, 4, 2, 6, 2, 2};
  GruModel m;
  m.dims = d;
  m.params = zero_params(d);
  const auto out = stack_forward(m, Matrix(6, 3));
  for (const auto &h : out.final_hidden)
    for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("zero head weights emit the bias") {
  std::mt19937_64 rng(3);
  GruDims d{3, 4, 2, 5, 2, 3};
  GruModel m = make_model(d, 1);
  m.params.head_w.fill(0.0);
  for (std::size_t i = 0; i < m.params.head_b.size(); ++i) m.params.head_b[i] = 0.1 * double(i);
  const Matrix p = predict(m, random_matrix(5, 3, rng));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.flat()[i] == doctest::Approx(0.1 * double(i)));
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(4);
  GruModel m = make_model({3, 4, 2, 5, 2, 3}, 5);
  const Matrix seq = random_matrix(5, 3, rng);
  CHECK(predict(m, seq) == predict(m, seq));
}

TEST_CASE("gate invariants over random evaluations") {
  // Bounded draws keep every pre-activation within +-12.5, where double
  // precision still resolves sigmoid and tanh away from their limits.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> weight(-0.5, 0.5), input(-2.0, 2.0), state(-1.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    GruDims d{std::size_t(dim(rng)), std::size_t(dim(rng)), 1, 1, 1, 1};
    GruModel m = make_model(d, rng());
    m.params.for_each([&](std::span<double> s) {
      for (double &v : s) v = weight(rng);
    });
    std::vector<double> x(d.input), h(d.hidden);
    for (double &v : x) v = input(rng);
    for (double &v : h) v = state(rng);
    const auto a = cell_forward(x, h, m.params.layers[0]);
    for (std::size_t i = 0; i < d.hidden; ++i) {
      REQUIRE((a.r[i] > 0.0 && a.r[i] < 1.0));
      REQUIRE((a.z[i] > 0.0 && a.z[i] < 1.0));
      REQUIRE((a.c[i] > -1.0 && a.c[i] < 1.0));
      REQUIRE(a.h[i] >= std::min(h[i], a.c[i]) - 1e-15);
      REQUIRE(a.h[i] <= std::max(h[i], a.c[i]) + 1e-15);
    }
  }
}

TEST_CASE("loss_mse") {
  Matrix a(2, 3, 1.0), b(2, 3, 1.0);
  CHECK(loss_mse(a, b) == 0.0);
  b.fill(3.0);
  CHECK(loss_mse(a, b) == doctest::Approx(4.0));
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(7, 9, rng), y = random_matrix(7, 9, rng);
  CHECK(std::abs(loss_mse(x, y) - mean_sq(x, y)) < 1e-12);
  CHECK_THROWS_AS(loss_mse(Matrix(2, 2), Matrix(2, 3)), Error);
}

TEST_CASE("directional input derivative matches the tangent oracle") {
  std::mt19937_64 rng(12);
  for (std::size_t layers = 1; layers <= 3; ++layers) {
    GruDims d{3, 5, layers, 4, 2, 3};
    GruModel m = make_model(d, 40 + layers);
    randomize(m, rng, 0.4);
    const Matrix x = random_matrix(4, 3, rng), dir = random_matrix(4, 3, rng);
    const auto jvp = oracle_jvp(m, x, dir);
    const double step = 1e-5;
    Matrix up = x, down = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      up.flat()[i] += step * dir.flat()[i];
      down.flat()[i] -= step * dir.flat()[i];
    }
    const Matrix yu = predict(m, up), yd = predict(m, down);
    for (std::size_t o = 0; o < jvp.size(); ++o) {
      const double fd = (yu.flat()[o] - yd.flat()[o]) / (2.0 * step);
      CHECK(std::abs(fd - jvp[o]) / std::max(1e-8, std::abs(fd) + std::abs(jvp[o])) < 1e-4);
    }
  }
}

TEST_CASE("tiny model gradients match central differences") {
  std::mt19937_64 rng(7);
  GruDims d{3, 3, 2, 5, 2, 2};
  GruModel m = make_model(d, 3);
  randomize(m, rng, 0.4);
  std::vector<Matrix> seqs{random_matrix(5, 3, rng), random_matrix(5, 3, rng)};
  const Matrix target = random_matrix(2, d.head_rows(), rng);
  CHECK(max_rel_grad_error(m, batch_of(seqs), target, 1e-3) < 1e-4);
}

TEST_CASE("gradients vanish at a perfect fit") {
  std::mt19937_64 rng(8);
  GruModel m = make_model({2, 3, 1, 4, 1, 2}, 2);
  const auto b = batch_of({random_matrix(4, 2, rng)});
  const ForwardCache c = forward(m, b);
  GruParams g;
  CHECK(backward(m, c, c.output, g) == 0.0);
  g.for_each([](std::span<const double> s) {
    for (double v : s) REQUIRE(v == 0.0);
  });
}

TEST_CASE("duplicated batch has the single-sample gradient") {
  std::mt19937_64 rng(9);
  GruModel m = make_model({2, 3, 2, 4, 1, 2}, 2);
  const Matrix s = random_matrix(4, 2, rng);
  const Matrix t1 = random_matrix(1, 2, rng);
  Matrix t2(2, 2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) t2(r, c) = t1(0, c);
  GruParams g1, g2;
  backward(m, forward(m, batch_of({s})), t1, g1);
  backward(m, forward(m, batch_of({s, s})), t2, g2);
  std::vector<std::span<const double>> a, b;
  g1.for_each([&](std::span<const double> x) { a.push_back(x); });
  g2.for_each([&](std::span<const double> x) { b.push_back(x); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) REQUIRE(a[k][i] == doctest::Approx(b[k][i]).epsilon(1e-12));
}

TEST_CASE("stale cache is refused") {
  std::mt19937_64 rng(10);
  GruModel m = make_model({2, 3, 1, 4, 1, 2}, 2);
  const ForwardCache c = forward(m, batch_of({random_matrix(4, 2, rng)}));
  GruParams g;
  AdamState adam = make_adam(m.params, {});
  backward(m, c, c.output, g);
  adam_step(m, g, adam);
  try {
    backward(m, c, c.output, g);
    FAIL("expected StaleCache");
  } catch (const Error &e) {
    CHECK(e.code() == Errc::StaleCache);
  }
}

TEST_CASE("adam: zero gradient without decay leaves weights alone") {
  std::vector<double> w{0.5, -1.0}, g{0.0, 0.0}, m(2), v(2);
  adam_update(w, g, m, v, 1, {1e-3, 0.0});
  CHECK(w[0] == 0.5);
  CHECK(w[1] == -1.0);
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  std::vector<double> w{0.5, -1.0, 2.0}, g{3.0, -0.02, 1e-3}, m(3), v(3);
  adam_update(w, g, m, v, 1, {1e-3, 0.0});
  CHECK(w[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-1.0 + 1e-3).epsilon(1e-6));
  CHECK(w[2] == doctest::Approx(2.0 - 1e-3).epsilon(1e-4));
}

TEST_CASE("adam: decoupled decay shrinks weights") {
  std::vector<double> w{2.0}, g{0.0}, m(1), v(1);
  adam_update(w, g, m, v, 1, {0.1, 0.5});
  CHECK(w[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("adam: descends w^2") {
  std::vector<double> w{1.0}, g(1), m(1), v(1);
  double prev = 1.0;
  for (long k = 1; k <= 100; ++k) {
    g[0] = 2.0 * w[0];
    adam_update(w, g, m, v, k, {1e-2, 0.0});
    REQUIRE(std::abs(w[0]) < prev);
    prev = std::abs(w[0]);
  }
  CHECK(std::abs(w[0]) < 0.5);
}

TEST_CASE("plateau scheduler") {
  SUBCASE("improving losses keep the rate") {
    PlateauScheduler s;
    double lr = 1e-3;
    for (int e = 0; e < 100; ++e) lr = s.step(1.0 - 1e-3 * e, lr);
    CHECK(lr == 1e-3);
  }
  SUBCASE("twenty flat epochs halve once") {
    PlateauScheduler s;
    double lr = s.step(1.0, 1e-3);
    for (int e = 0; e < 19; ++e) lr = s.step(1.0, lr);
    CHECK(lr == 1e-3);
    lr = s.step(1.0, lr);
    CHECK(lr == 5e-4);
  }
  SUBCASE("two hundred flat epochs halve nine times") {
    PlateauScheduler s;
    double lr = 1e-3;
    for (int e = 0; e < 200; ++e) lr = s.step(1.0, lr);
    CHECK(lr == doctest::Approx(1e-3 / 512.0));
  }
  SUBCASE("long plateaus clamp at the floor") {
    PlateauScheduler s;
    double lr = 1e-3;
    for (int e = 0; e < 1000; ++e) lr = s.step(1.0, lr);
    CHECK(lr == 1e-6);
  }
}

TEST_CASE("early stopping") {
  EarlyStopping es(3);
  CHECK(es.update(1.0));
  CHECK(es.update(0.5));
  CHECK_FALSE(es.update(0.6));
  CHECK_FALSE(es.update(0.7));
  CHECK_FALSE(es.should_stop());
  CHECK_FALSE(es.update(0.8));
  CHECK(es.should_stop());
  CHECK(es.best_epoch() == 2);
  CHECK(es.best() == 0.5);
}

TEST_CASE("parameter count follows the gate equations") {
  GruDims d{26, 256, 2, 30, 10, 29};
  const std::size_t l0 = 3 * (256 * (256 + 26) + 256);
  const std::size_t l1 = 3 * (256 * (256 + 256) + 256);
  const std::size_t head = 290 * 256 + 290;
  CHECK(param_count(d) == l0 + l1 + head);
  CHECK(make_model(d, 0).params.size() == param_count(d));
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "thermotwin_test_gru";
  fs::create_directories(dir);
  std::mt19937_64 rng(12);
  GruDims d{26, 8, 2, 6, 2, 29};
  GruModel m = make_model(d, 4);
  m.norm.in_mean.assign(26, 1.0);
  m.norm.in_std.assign(26, 2.0);
  m.norm.out_mean.assign(29, 0.5);
  m.norm.out_std.assign(29, 3.0);
  const fs::path path = dir / "m.json";
  save_checkpoint(m, path);

  std::vector<std::string> warnings;
  const GruModel back = load_checkpoint(path, &warnings);
  CHECK(back.dims == d);
  CHECK(back.norm == m.norm);
  CHECK(back.params == m.params);
  const Matrix seq = random_matrix(6, 26, rng);
  CHECK(predict(back, seq) == predict(m, seq));
  CHECK_FALSE(warnings.empty());  // hidden size 8 is outside the standard set

  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(dir / "trunc.json");
    out << text.substr(0, text.size() / 2);
  }
  try {
    load_checkpoint(dir / "trunc.json");
    FAIL("expected CorruptFile");
  } catch (const Error &e) {
    CHECK(e.code() == Errc::CorruptFile);
  }
  fs::remove_all(dir);
}

TEST_CASE("single-precision engine tracks the double forward pass") {
  std::mt19937_64 rng(13);
  GruDims d{26, 32, 2, 30, 10, 29};
  GruModel m = make_model(d, 6);
  const Matrix seq = random_matrix(30, 26, rng);
  InferenceEngine engine(m);
  std::vector<float> window(seq.flat().begin(), seq.flat().end()), out(d.head_rows());
  engine.predict(window, out);
  const Matrix want = predict(m, seq);
  for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(std::abs(out[i] - want.flat()[i]) < 1e-4);
}
