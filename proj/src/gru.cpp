// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/gru.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "thermotwin/error.hpp"
#include "thermotwin/kernels.hpp"

namespace thermotwin {

namespace {

template <class T>
void mm(MatrixView<const T> a, MatrixView<const T> b, MatrixView<T> c, bool accumulate) {
  kernels::gemm<T>(a, b, c, accumulate);
}

/// y += x * U for a single row x; U is row-major |x| x |y|.
void row_times(const float *__restrict x, const BasicMatrix<float> &u, float *__restrict y) {
  const std::size_t n = u.cols();
  for (std::size_t k = 0; k < u.rows(); ++k) {
    const float xk = x[k];
    const float *__restrict row = u.data() + k * n;
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) y[j] += xk * row[j];
  }
}

template <class T>
T sigmoid(T a) {
  return T(1) / (T(1) + std::exp(-a));
}

template <class T>
MatrixView<const T> cview(const BasicMatrix<T> &m) {
  return m.view();
}

/// Hidden-column block of a gate matrix: d_h x d_h view.
MatrixView<const double> h_part(const Matrix &w) {
  return {w.data(), w.rows(), w.rows(), w.cols()};
}
MatrixView<double> h_part(Matrix &w) { return {w.data(), w.rows(), w.rows(), w.cols()}; }

/// Input-column block of a gate matrix: d_h x d_x view.
MatrixView<const double> x_part(const Matrix &w) {
  return {w.data() + w.rows(), w.rows(), w.cols() - w.rows(), w.cols()};
}
MatrixView<double> x_part(Matrix &w) {
  return {w.data() + w.rows(), w.rows(), w.cols() - w.rows(), w.cols()};
}

template <class T>
struct Packed {
  BasicMatrix<T> ux;     // d_in x 3d_h
  BasicMatrix<T> uh_rz;  // d_h x 2d_h
  BasicMatrix<T> uh_c;   // d_h x d_h
  std::vector<T> bias;   // 3d_h
};

template <class T>
Packed<T> pack(const GruLayerParams &p) {
  const std::size_t dh = p.hidden();
  const std::size_t dx = p.input();
  Packed<T> out;
  out.ux = BasicMatrix<T>(dx, 3 * dh);
  out.uh_rz = BasicMatrix<T>(dh, 2 * dh);
  out.uh_c = BasicMatrix<T>(dh, dh);
  out.bias.resize(3 * dh);
  const Matrix *gates[3] = {&p.w_r, &p.w_z, &p.w_h};
  const std::vector<double> *biases[3] = {&p.b_r, &p.b_z, &p.b_h};
  for (std::size_t g = 0; g < 3; ++g) {
    const Matrix &w = *gates[g];
    for (std::size_t i = 0; i < dh; ++i) {
      for (std::size_t j = 0; j < dx; ++j) out.ux(j, g * dh + i) = static_cast<T>(w(i, dh + j));
      for (std::size_t j = 0; j < dh; ++j) {
        if (g < 2)
          out.uh_rz(j, g * dh + i) = static_cast<T>(w(i, j));
        else
          out.uh_c(j, i) = static_cast<T>(w(i, j));
      }
      out.bias[g * dh + i] = static_cast<T>((*biases[g])[i]);
    }
  }
  return out;
}

void check_model(const GruModel &model) {
  const auto &d = model.dims;
  const auto &p = model.params;
  if (p.layers.size() != d.layers) throw Error(Errc::ShapeMismatch, "layer count");
  for (std::size_t l = 0; l < d.layers; ++l) {
    const auto &lp = p.layers[l];
    const std::size_t cols = d.hidden + d.layer_input(l);
    for (const Matrix *w : {&lp.w_r, &lp.w_z, &lp.w_h})
      if (w->rows() != d.hidden || w->cols() != cols)
        throw Error(Errc::ShapeMismatch, "gate matrix of layer " + std::to_string(l));
    for (const auto *b : {&lp.b_r, &lp.b_z, &lp.b_h})
      if (b->size() != d.hidden) throw Error(Errc::ShapeMismatch, "gate bias");
  }
  if (p.head_w.rows() != d.head_rows() || p.head_w.cols() != d.hidden ||
      p.head_b.size() != d.head_rows())
    throw Error(Errc::ShapeMismatch, "output head");
}

}  // namespace

std::size_t GruParams::size() const {
  std::size_t n = 0;
  for_each([&](std::span<const double> s) { n += s.size(); });
  return n;
}

GruParams zero_params(const GruDims &dims) {
  GruParams p;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::size_t cols = dims.hidden + dims.layer_input(l);
    GruLayerParams lp;
    lp.w_r = Matrix(dims.hidden, cols);
    lp.w_z = Matrix(dims.hidden, cols);
    lp.w_h = Matrix(dims.hidden, cols);
    lp.b_r.assign(dims.hidden, 0.0);
    lp.b_z.assign(dims.hidden, 0.0);
    lp.b_h.assign(dims.hidden, 0.0);
    p.layers.push_back(std::move(lp));
  }
  p.head_w = Matrix(dims.head_rows(), dims.hidden);
  p.head_b.assign(dims.head_rows(), 0.0);
  return p;
}

GruModel make_model(const GruDims &dims, std::uint64_t seed) {
  if (dims.layers == 0 || dims.hidden == 0 || dims.input == 0 || dims.input_steps == 0 ||
      dims.output_steps == 0 || dims.output == 0)
    throw Error(Errc::InvalidConfig, "model dimensions must be positive");
  GruModel model;
  model.dims = dims;
  model.params = zero_params(dims);
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto &l : model.params.layers)
    for (Matrix *w : {&l.w_r, &l.w_z, &l.w_h})
      for (double &v : w->flat()) v = dist(rng);
  for (double &v : model.params.head_w.flat()) v = dist(rng);
  return model;
}

std::size_t param_count(const GruDims &dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < dims.layers; ++l)
    n += 3 * (dims.hidden * (dims.hidden + dims.layer_input(l)) + dims.hidden);
  return n + dims.head_rows() * dims.hidden + dims.head_rows();
}

bool is_standard_hidden(std::size_t hidden) {
  return hidden == 128 || hidden == 256 || hidden == 512 || hidden == 1024;
}

GateActivations cell_forward(std::span<const double> x, std::span<const double> h_prev,
                             const GruLayerParams &p) {
  const std::size_t dh = p.hidden();
  const std::size_t dx = p.input();
  if (x.size() != dx || h_prev.size() != dh)
    throw Error(Errc::ShapeMismatch, "cell_forward input sizes");
  GateActivations g;
  g.r.resize(dh);
  g.z.resize(dh);
  g.c.resize(dh);
  g.h.resize(dh);
  auto affine = [&](const Matrix &w, double b, std::size_t i, std::span<const double> hh) {
    double a = b;
    for (std::size_t j = 0; j < dh; ++j) a += w(i, j) * hh[j];
    for (std::size_t j = 0; j < dx; ++j) a += w(i, dh + j) * x[j];
    return a;
  };
  for (std::size_t i = 0; i < dh; ++i) {
    g.r[i] = sigmoid(affine(p.w_r, p.b_r[i], i, h_prev));
    g.z[i] = sigmoid(affine(p.w_z, p.b_z[i], i, h_prev));
  }
  std::vector<double> rh(dh);
  for (std::size_t j = 0; j < dh; ++j) rh[j] = g.r[j] * h_prev[j];
  for (std::size_t i = 0; i < dh; ++i) {
    g.c[i] = std::tanh(affine(p.w_h, p.b_h[i], i, rh));
    g.h[i] = (1.0 - g.z[i]) * h_prev[i] + g.z[i] * g.c[i];
  }
  return g;
}

ForwardCache forward(const GruModel &model, const SequenceBatch &batch) {
  check_model(model);
  const auto &d = model.dims;
  const std::size_t B = batch.batch;
  const std::size_t T = batch.steps;
  const std::size_t dh = d.hidden;
  if (B == 0 || T == 0 || batch.x.rows() != B * T || batch.x.cols() != d.input)
    throw Error(Errc::ShapeMismatch, "sequence batch shape");

  ForwardCache cache;
  cache.batch = B;
  cache.steps = T;
  cache.model_version = model.version;
  cache.layers.resize(d.layers);

  for (std::size_t l = 0; l < d.layers; ++l) {
    LayerCache &lc = cache.layers[l];
    if (l == 0) {
      lc.input = batch.x;
    } else {
      const Matrix &below = cache.layers[l - 1].h;
      lc.input = Matrix(T * B, dh);
      std::copy(below.data() + B * dh, below.data() + (T + 1) * B * dh, lc.input.data());
    }
    const Packed<double> pk = pack<double>(model.params.layers[l]);

    Matrix xp(T * B, 3 * dh);
    mm<double>(lc.input.view(), pk.ux.view(), xp.view(), false);
    for (std::size_t row = 0; row < T * B; ++row) {
      double *dst = xp.data() + row * 3 * dh;
      for (std::size_t k = 0; k < 3 * dh; ++k) dst[k] += pk.bias[k];
    }

    lc.h = Matrix((T + 1) * B, dh);
    lc.r = Matrix(T * B, dh);
    lc.z = Matrix(T * B, dh);
    lc.c = Matrix(T * B, dh);
    lc.rh = Matrix(T * B, dh);
    for (std::size_t t = 0; t < T; ++t) {
      const auto hp = cview(lc.h).block(t * B, 0, B, dh);
      auto a = xp.view().block(t * B, 0, B, 3 * dh);
      mm<double>(hp, pk.uh_rz.view(), a.block(0, 0, B, 2 * dh), true);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        for (std::size_t i = 0; i < dh; ++i) {
          const double r = sigmoid(a(b, i));
          lc.r(row, i) = r;
          lc.z(row, i) = sigmoid(a(b, dh + i));
          lc.rh(row, i) = r * hp(b, i);
        }
      }
      mm<double>(cview(lc.rh).block(t * B, 0, B, dh), pk.uh_c.view(), a.block(0, 2 * dh, B, dh),
                 true);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        for (std::size_t i = 0; i < dh; ++i) {
          const double c = std::tanh(a(b, 2 * dh + i));
          const double z = lc.z(row, i);
          lc.c(row, i) = c;
          lc.h(row + B, i) = (1.0 - z) * hp(b, i) + z * c;
        }
      }
    }
  }

  const Matrix &top = cache.layers.back().h;
  Matrix head_t(dh, d.head_rows());
  kernels::transpose<double>(model.params.head_w.view(), head_t.view());
  cache.output = Matrix(B, d.head_rows());
  for (std::size_t b = 0; b < B; ++b)
    std::copy(model.params.head_b.begin(), model.params.head_b.end(), cache.output.row(b).begin());
  mm<double>(cview(top).block(T * B, 0, B, dh), head_t.view(), cache.output.view(), true);
  return cache;
}

StackOutput stack_forward(const GruModel &model, const Matrix &seq) {
  if (seq.cols() != model.dims.input || seq.rows() == 0)
    throw Error(Errc::ShapeMismatch, "sequence shape");
  SequenceBatch batch{1, seq.rows(), seq};
  StackOutput out;
  out.cache = forward(model, batch);
  for (const auto &lc : out.cache.layers) {
    auto last = lc.h.row(seq.rows());
    out.final_hidden.emplace_back(last.begin(), last.end());
  }
  return out;
}

Matrix predict(const GruModel &model, const Matrix &seq) {
  if (seq.rows() != model.dims.input_steps)
    throw Error(Errc::ShapeMismatch, "expected " + std::to_string(model.dims.input_steps) +
                                         " input steps, got " + std::to_string(seq.rows()));
  const auto out = stack_forward(model, seq).cache.output;
  Matrix y(model.dims.output_steps, model.dims.output);
  std::copy(out.data(), out.data() + out.size(), y.data());
  return y;
}

double loss_mse(const Matrix &pred, const Matrix &target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(Errc::ShapeMismatch, "loss operands differ in shape");
  if (pred.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred.data()[i] - target.data()[i];
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

double backward(const GruModel &model, const ForwardCache &cache, const Matrix &targets,
                GruParams &grads) {
  const auto &d = model.dims;
  if (cache.model_version != model.version || cache.layers.size() != d.layers)
    throw Error(Errc::StaleCache, "cache was produced by a different model state");
  if (targets.rows() != cache.batch || targets.cols() != d.head_rows() ||
      cache.output.rows() != cache.batch)
    throw Error(Errc::StaleCache, "targets do not match the cached batch");
  check_model(model);

  const std::size_t B = cache.batch;
  const std::size_t T = cache.steps;
  const std::size_t dh = d.hidden;
  const std::size_t TB = T * B;
  grads = zero_params(d);

  const double loss = loss_mse(cache.output, targets);
  Matrix dy(B, d.head_rows());
  const double scale = 2.0 / static_cast<double>(dy.size());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dy.data()[i] = scale * (cache.output.data()[i] - targets.data()[i]);

  const auto h_top = cview(cache.layers.back().h).block(TB, 0, B, dh);
  Matrix dy_t(d.head_rows(), B);
  kernels::transpose<double>(dy.view(), dy_t.view());
  mm<double>(dy_t.view(), h_top, grads.head_w.view(), false);
  kernels::column_sums<double>(dy.view(), grads.head_b.data(), false);

  Matrix d_ext(TB, dh);
  mm<double>(dy.view(), model.params.head_w.view(), d_ext.view().block((T - 1) * B, 0, B, dh),
             false);

  for (std::size_t l = d.layers; l-- > 0;) {
    const LayerCache &lc = cache.layers[l];
    const GruLayerParams &p = model.params.layers[l];
    GruLayerParams &gp = grads.layers[l];
    const std::size_t dx = p.input();

    Matrix da(TB, 3 * dh);
    Matrix carry(B, dh);
    Matrix drh(B, dh);
    for (std::size_t t = T; t-- > 0;) {
      auto da_t = da.view().block(t * B, 0, B, 3 * dh);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        for (std::size_t i = 0; i < dh; ++i) {
          const double g = d_ext(row, i) + carry(b, i);
          const double z = lc.z(row, i);
          const double c = lc.c(row, i);
          const double hp = lc.h(row, i);
          da_t(b, 2 * dh + i) = g * z * (1.0 - c * c);
          da_t(b, dh + i) = g * (c - hp) * z * (1.0 - z);
          carry(b, i) = g * (1.0 - z);
        }
      }
      mm<double>(da_t.block(0, 2 * dh, B, dh), h_part(p.w_h), drh.view(), false);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        for (std::size_t i = 0; i < dh; ++i) {
          const double r = lc.r(row, i);
          da_t(b, i) = drh(b, i) * lc.h(row, i) * r * (1.0 - r);
          carry(b, i) += drh(b, i) * r;
        }
      }
      mm<double>(da_t.block(0, 0, B, dh), h_part(p.w_r), carry.view(), true);
      mm<double>(da_t.block(0, dh, B, dh), h_part(p.w_z), carry.view(), true);
    }

    Matrix da_t(3 * dh, TB);
    kernels::transpose<double>(da.view(), da_t.view());
    const auto h_prev = cview(lc.h).block(0, 0, TB, dh);
    const auto gate = [&](std::size_t g) { return cview(da_t).block(g * dh, 0, dh, TB); };
    mm<double>(gate(0), h_prev, h_part(gp.w_r), false);
    mm<double>(gate(1), h_prev, h_part(gp.w_z), false);
    mm<double>(gate(2), lc.rh.view(), h_part(gp.w_h), false);
    mm<double>(gate(0), lc.input.view(), x_part(gp.w_r), false);
    mm<double>(gate(1), lc.input.view(), x_part(gp.w_z), false);
    mm<double>(gate(2), lc.input.view(), x_part(gp.w_h), false);

    std::vector<double> db(3 * dh);
    kernels::column_sums<double>(da.view(), db.data(), false);
    std::copy(db.begin(), db.begin() + dh, gp.b_r.begin());
    std::copy(db.begin() + dh, db.begin() + 2 * dh, gp.b_z.begin());
    std::copy(db.begin() + 2 * dh, db.end(), gp.b_h.begin());

    if (l > 0) {
      Matrix below(TB, dx);
      const auto da_g = [&](std::size_t g) { return cview(da).block(0, g * dh, TB, dh); };
      mm<double>(da_g(0), x_part(p.w_r), below.view(), false);
      mm<double>(da_g(1), x_part(p.w_z), below.view(), true);
      mm<double>(da_g(2), x_part(p.w_h), below.view(), true);
      d_ext = std::move(below);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimizer and schedules

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig &c) {
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] *= decay;
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    w[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
  }
}

AdamState make_adam(const GruParams &params, const AdamConfig &config) {
  AdamState s;
  s.config = config;
  s.m = params;
  s.m.for_each([](std::span<double> x) { std::fill(x.begin(), x.end(), 0.0); });
  s.v = s.m;
  return s;
}

void adam_step(GruModel &model, const GruParams &grads, AdamState &state) {
  std::vector<std::span<double>> w, m, v;
  std::vector<std::span<const double>> g;
  model.params.for_each([&](std::span<double> s) { w.push_back(s); });
  state.m.for_each([&](std::span<double> s) { m.push_back(s); });
  state.v.for_each([&](std::span<double> s) { v.push_back(s); });
  grads.for_each([&](std::span<const double> s) { g.push_back(s); });
  if (g.size() != w.size() || m.size() != w.size())
    throw Error(Errc::ShapeMismatch, "optimizer state does not match the model");
  ++state.step;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (g[i].size() != w[i].size() || m[i].size() != w[i].size())
      throw Error(Errc::ShapeMismatch, "optimizer tensor size");
    adam_update(w[i], g[i], m[i], v[i], state.step, state.config);
  }
  ++model.version;
}

double PlateauScheduler::step(double val_loss, double lr) {
  if (val_loss < best_ - threshold) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ >= patience) {
    bad_epochs_ = 0;
    return std::max(lr * factor, min_lr);
  }
  return lr;
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char *kCheckpointFormat = "thermotwin-gru";

using nlohmann::json;

json dims_json(const GruDims &d) {
  return {{"input", d.input},         {"hidden", d.hidden},
          {"layers", d.layers},       {"input_steps", d.input_steps},
          {"output_steps", d.output_steps}, {"output", d.output}};
}

void fill(std::span<double> dst, const json &src, const char *what) {
  if (!src.is_array() || src.size() != dst.size())
    throw Error(Errc::CorruptFile, std::string("tensor size mismatch: ") + what);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i].get<double>();
}

}  // namespace

void save_checkpoint(const GruModel &model, const std::filesystem::path &path) {
  check_model(model);
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["dims"] = dims_json(model.dims);
  j["param_count"] = param_count(model.dims);
  j["norm_stats"] = {{"in_mean", model.norm.in_mean},
                     {"in_std", model.norm.in_std},
                     {"out_mean", model.norm.out_mean},
                     {"out_std", model.norm.out_std}};
  json layers = json::array();
  for (const auto &l : model.params.layers) {
    layers.push_back({{"w_r", l.w_r.flat()},
                      {"w_z", l.w_z.flat()},
                      {"w_h", l.w_h.flat()},
                      {"b_r", l.b_r},
                      {"b_z", l.b_z},
                      {"b_h", l.b_h}});
  }
  j["layers"] = std::move(layers);
  j["head"] = {{"w", model.params.head_w.flat()}, {"b", model.params.head_b}};

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::CorruptFile, "cannot write " + tmp);
    out << j.dump() << '\n';
    if (!out) throw Error(Errc::CorruptFile, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

GruModel load_checkpoint(const std::filesystem::path &path, std::vector<std::string> *warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::CorruptFile, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw Error(Errc::CorruptFile, path.string() + ": " + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
      throw Error(Errc::CorruptFile, "not a GRU checkpoint: " + path.string());
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw Error(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                             ", expected " + std::to_string(kCheckpointVersion));
    const json &jd = j.at("dims");
    GruDims d;
    d.input = jd.at("input").get<std::size_t>();
    d.hidden = jd.at("hidden").get<std::size_t>();
    d.layers = jd.at("layers").get<std::size_t>();
    d.input_steps = jd.at("input_steps").get<std::size_t>();
    d.output_steps = jd.at("output_steps").get<std::size_t>();
    d.output = jd.at("output").get<std::size_t>();
    if (d.layers == 0 || d.hidden == 0 || d.input == 0 || d.output == 0 || d.output_steps == 0)
      throw Error(Errc::CorruptFile, "degenerate dimensions");
    if (warnings && !is_standard_hidden(d.hidden))
      warnings->push_back("hidden size " + std::to_string(d.hidden) +
                          " is outside {128, 256, 512, 1024}");
    if (warnings && (d.layers < 1 || d.layers > 3))
      warnings->push_back("layer count " + std::to_string(d.layers) + " is outside {1, 2, 3}");

    GruModel model;
    model.dims = d;
    model.params = zero_params(d);
    const json &jl = j.at("layers");
    if (!jl.is_array() || jl.size() != d.layers)
      throw Error(Errc::CorruptFile, "layer count mismatch");
    for (std::size_t l = 0; l < d.layers; ++l) {
      auto &lp = model.params.layers[l];
      fill(lp.w_r.flat(), jl[l].at("w_r"), "w_r");
      fill(lp.w_z.flat(), jl[l].at("w_z"), "w_z");
      fill(lp.w_h.flat(), jl[l].at("w_h"), "w_h");
      fill(lp.b_r, jl[l].at("b_r"), "b_r");
      fill(lp.b_z, jl[l].at("b_z"), "b_z");
      fill(lp.b_h, jl[l].at("b_h"), "b_h");
    }
    fill(model.params.head_w.flat(), j.at("head").at("w"), "head.w");
    fill(model.params.head_b, j.at("head").at("b"), "head.b");

    const json &jn = j.at("norm_stats");
    jn.at("in_mean").get_to(model.norm.in_mean);
    jn.at("in_std").get_to(model.norm.in_std);
    jn.at("out_mean").get_to(model.norm.out_mean);
    jn.at("out_std").get_to(model.norm.out_std);
    if (!model.norm.empty() &&
        (model.norm.in_mean.size() != d.input || model.norm.in_std.size() != d.input ||
         model.norm.out_mean.size() != d.output || model.norm.out_std.size() != d.output))
      throw Error(Errc::CorruptFile, "normalization statistics size mismatch");
    return model;
  } catch (const json::exception &e) {
    throw Error(Errc::CorruptFile, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Single-precision inference

InferenceEngine::InferenceEngine(const GruModel &model)
    : dims_(model.dims), norm_(model.norm) {
  check_model(model);
  for (const auto &lp : model.params.layers) {
    Packed<float> pk = pack<float>(lp);
    layers_.push_back({std::move(pk.ux), std::move(pk.uh_rz), std::move(pk.uh_c),
                       std::move(pk.bias)});
  }
  const std::size_t dh = dims_.hidden;
  head_t_ = BasicMatrix<float>(dh, dims_.head_rows());
  for (std::size_t i = 0; i < dims_.head_rows(); ++i)
    for (std::size_t j = 0; j < dh; ++j) head_t_(j, i) = static_cast<float>(model.params.head_w(i, j));
  head_b_.assign(model.params.head_b.begin(), model.params.head_b.end());
  seq_a_ = BasicMatrix<float>(dims_.input_steps, dh);
  seq_b_ = BasicMatrix<float>(dims_.input_steps, dh);
  proj_ = BasicMatrix<float>(dims_.input_steps, 3 * dh);
  h_.resize(dh);
  rh_.resize(dh);
}

void InferenceEngine::predict(std::span<const float> window, std::span<float> out) {
  const std::size_t T = dims_.input_steps;
  const std::size_t dh = dims_.hidden;
  if (window.size() != T * dims_.input || out.size() != dims_.head_rows())
    throw Error(Errc::ShapeMismatch, "inference buffer sizes");

  MatrixView<const float> in{window.data(), T, dims_.input, dims_.input};
  BasicMatrix<float> *dst = &seq_a_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer &layer = layers_[l];
    mm<float>(in, layer.ux.view(), proj_.view(), false);
    std::fill(h_.begin(), h_.end(), 0.0f);
    for (std::size_t t = 0; t < T; ++t) {
      float *a = proj_.data() + t * 3 * dh;
      for (std::size_t k = 0; k < 3 * dh; ++k) a[k] += layer.bias[k];
      row_times(h_.data(), layer.uh_rz, a);
      for (std::size_t i = 0; i < dh; ++i) {
        a[i] = sigmoid(a[i]);
        a[dh + i] = sigmoid(a[dh + i]);
        rh_[i] = a[i] * h_[i];
      }
      row_times(rh_.data(), layer.uh_c, a + 2 * dh);
      float *h_out = dst->data() + t * dh;
      for (std::size_t i = 0; i < dh; ++i) {
        const float z = a[dh + i];
        h_[i] = (1.0f - z) * h_[i] + z * std::tanh(a[2 * dh + i]);
        h_out[i] = h_[i];
      }
    }
    in = dst->view();
    dst = dst == &seq_a_ ? &seq_b_ : &seq_a_;
  }
  std::copy(head_b_.begin(), head_b_.end(), out.begin());
  row_times(h_.data(), head_t_, out.data());
}

}  // namespace thermotwin
