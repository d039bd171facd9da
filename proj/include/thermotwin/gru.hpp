// SPDX-License-Identifier: Apache-2.0
//
// Stacked GRU with a linear head mapping the top layer's final hidden state
// to a T_d x d_out block.
//
//   r_t = sigmoid(W_r [h_{t-1}; x_t] + b_r)
//   z_t = sigmoid(W_z [h_{t-1}; x_t] + b_z)
//   c_t = tanh(W_h [r_t * h_{t-1}; x_t] + b_h)
//   h_t = (1 - z_t) * h_{t-1} + z_t * c_t
//
// Each W is d_h x (d_h + d_x) with the hidden columns first.
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "thermotwin/matrix.hpp"

namespace thermotwin {

struct GruDims {
  std::size_t input = 26;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t input_steps = 30;
  std::size_t output_steps = 10;
  std::size_t output = 29;

  std::size_t head_rows() const { return output_steps * output; }
  std::size_t layer_input(std::size_t l) const { return l == 0 ? input : hidden; }
  bool operator==(const GruDims &) const = default;
};

struct GruLayerParams {
  Matrix w_r, w_z, w_h;
  std::vector<double> b_r, b_z, b_h;

  std::size_t hidden() const { return w_r.rows(); }
  std::size_t input() const { return w_r.cols() - w_r.rows(); }
  bool operator==(const GruLayerParams &) const = default;
};

struct GruParams {
  std::vector<GruLayerParams> layers;
  Matrix head_w;  // (T_d * d_out) x d_h
  std::vector<double> head_b;

  /// Visits every tensor as a flat span, in a fixed order.
  template <class F>
  void for_each(F &&fn) {
    for (auto &l : layers) {
      fn(l.w_r.flat()), fn(l.w_z.flat()), fn(l.w_h.flat());
      fn(std::span<double>(l.b_r)), fn(std::span<double>(l.b_z)), fn(std::span<double>(l.b_h));
    }
    fn(head_w.flat());
    fn(std::span<double>(head_b));
  }
  template <class F>
  void for_each(F &&fn) const {
    for (const auto &l : layers) {
      fn(l.w_r.flat()), fn(l.w_z.flat()), fn(l.w_h.flat());
      fn(std::span<const double>(l.b_r)), fn(std::span<const double>(l.b_z)),
          fn(std::span<const double>(l.b_h));
    }
    fn(head_w.flat());
    fn(std::span<const double>(head_b));
  }

  std::size_t size() const;
  bool operator==(const GruParams &) const = default;
};

/// Per-channel z-score statistics: 26 inputs, 29 outputs.
struct NormStats {
  std::vector<double> in_mean, in_std;
  std::vector<double> out_mean, out_std;

  bool empty() const { return in_mean.empty(); }
  bool operator==(const NormStats &) const = default;
};

struct GruModel {
  GruDims dims;
  GruParams params;
  NormStats norm;
  std::uint64_t version = 0;  // bumped on every parameter update
};

GruParams zero_params(const GruDims &dims);
/// Weights uniform in +-1/sqrt(d_h), biases zero.
GruModel make_model(const GruDims &dims, std::uint64_t seed);
std::size_t param_count(const GruDims &dims);
bool is_standard_hidden(std::size_t hidden);

struct GateActivations {
  std::vector<double> r, z, c, h;
};

GateActivations cell_forward(std::span<const double> x, std::span<const double> h_prev,
                             const GruLayerParams &p);

/// `x` holds `steps * batch` rows, row t * batch + b being sample b at step t.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  Matrix x;
};

struct LayerCache {
  Matrix input;  // steps*batch x d_in
  Matrix h;      // (steps+1)*batch x d_h, first block is the zero initial state
  Matrix r, z, c, rh;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix output;  // batch x (T_d * d_out)
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::uint64_t model_version = 0;
};

ForwardCache forward(const GruModel &model, const SequenceBatch &batch);

struct StackOutput {
  std::vector<std::vector<double>> final_hidden;  // one per layer
  ForwardCache cache;
};

StackOutput stack_forward(const GruModel &model, const Matrix &seq);

/// seq: T_e x d_x (normalized) -> T_d x d_out (normalized)
Matrix predict(const GruModel &model, const Matrix &seq);

double loss_mse(const Matrix &pred, const Matrix &target);

/// Gradients of the batch-mean MSE between cache.output and `targets`
/// (batch x T_d*d_out). Returns the loss.
double backward(const GruModel &model, const ForwardCache &cache, const Matrix &targets,
                GruParams &grads);

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One decoupled-decay Adam update of a flat tensor; `step` counts from 1.
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig &config);

struct AdamState {
  AdamConfig config;
  GruParams m, v;
  long step = 0;
};

AdamState make_adam(const GruParams &params, const AdamConfig &config);
void adam_step(GruModel &model, const GruParams &grads, AdamState &state);

class PlateauScheduler {
 public:
  double factor = 0.5;
  int patience = 20;
  double threshold = 1e-6;
  double min_lr = 1e-6;

  /// Feeds one epoch's validation loss; returns the learning rate to use next.
  double step(double val_loss, double lr);
  int bad_epochs() const { return bad_epochs_; }

 private:
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience = 100) : patience_(patience) {}

  /// Returns true when `val_loss` is a new best.
  bool update(double val_loss);
  bool should_stop() const { return epoch_ - best_epoch_ >= patience_; }
  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

void save_checkpoint(const GruModel &model, const std::filesystem::path &path);
/// Non-fatal findings (such as a non-standard hidden size) go to `warnings`.
GruModel load_checkpoint(const std::filesystem::path &path,
                         std::vector<std::string> *warnings = nullptr);

/// Single-precision, allocation-free predictor for rollouts.
class InferenceEngine {
 public:
  explicit InferenceEngine(const GruModel &model);

  /// window: T_e x d_x normalized, row-major; out: T_d * d_out normalized.
  void predict(std::span<const float> window, std::span<float> out);
  const GruDims &dims() const { return dims_; }
  const NormStats &norm() const { return norm_; }

 private:
  struct Layer {
    BasicMatrix<float> ux;     // d_in x 3d_h
    BasicMatrix<float> uh_rz;  // d_h x 2d_h
    BasicMatrix<float> uh_c;   // d_h x d_h
    std::vector<float> bias;   // 3d_h
  };
  GruDims dims_;
  NormStats norm_;
  std::vector<Layer> layers_;
  BasicMatrix<float> head_t_;  // d_h x (T_d * d_out)
  std::vector<float> head_b_;
  BasicMatrix<float> seq_a_, seq_b_, proj_;
  std::vector<float> h_, rh_;
};

}  // namespace thermotwin
