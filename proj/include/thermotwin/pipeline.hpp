// SPDX-License-Identifier: Apache-2.0
//
// Windowing, normalization, training, evaluation and the width/depth sweep.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thermotwin/channels.hpp"
#include "thermotwin/gru.hpp"

namespace thermotwin {

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange &) const = default;
};

struct SplitRanges {
  IndexRange train, valid, test;
};

/// 70/10/20 contiguous split, floors for the first two parts.
SplitRanges split_sequential(std::size_t n_steps);

/// Trajectory packed into model layouts, one row per frame.
struct Dataset {
  Matrix inputs;   // n x 26
  Matrix outputs;  // n x 29

  std::size_t size() const { return inputs.rows(); }
};

Dataset pack_dataset(const Trajectory &trajectory);

struct WindowSample {
  Matrix input;   // 30 x 26
  Matrix target;  // 10 x 29
  std::size_t origin_index = 0;
};

/// One sample per start index inside `range`; samples never leave the range.
std::vector<WindowSample> make_windows(IndexRange range, const Dataset &data,
                                       std::size_t input_steps = 30,
                                       std::size_t output_steps = 10);

/// Mean and standard deviation over the rows of `range`; zero spread maps to 1.
NormStats fit_norm(const Dataset &data, IndexRange range);

enum class ZDirection { Forward, Inverse };

/// Applies the input statistics to 26-column blocks and the output
/// statistics to 29-column blocks.
Matrix zscore(const NormStats &stats, const Matrix &block, ZDirection direction);

/// Normalized samples stacked for batching.
struct WindowSet {
  std::size_t count = 0;
  std::size_t input_steps = 30;
  Matrix inputs;   // count*input_steps x 26, sample-major
  Matrix targets;  // count x (output_steps*29)
  std::vector<std::size_t> origins;
};

WindowSet make_window_set(const std::vector<WindowSample> &samples, const NormStats &stats);

/// Time-major batch of the listed samples.
SequenceBatch gather_batch(const WindowSet &set, std::span<const std::size_t> indices,
                           Matrix *targets = nullptr);

struct TrainConfig {
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t batch = 128;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int early_stop_patience = 100;
  int max_epochs = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

TrainConfig load_train_config(const std::filesystem::path &path);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  GruModel model;  // best-validation snapshot, norm stats embedded
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_valid = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord &)>;

TrainResult train(const WindowSet &train_set, const WindowSet &valid_set, const NormStats &norm,
                  const TrainConfig &config, const EpochCallback &on_epoch = {});

/// Mean squared error over every element of the set, in normalized units.
double dataset_loss(const GruModel &model, const WindowSet &set, std::size_t batch = 128);

void write_history_csv(const std::filesystem::path &path, const std::vector<EpochRecord> &history);

struct GroupError {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

struct GroupMetrics {
  GroupError temperature, pressure, flow, power, actuator;
};

/// Rows are flattened 10x29 horizons in physical units. Actuator errors are
/// expressed in percent of each channel's range.
GroupMetrics group_metrics(const Matrix &predicted, const Matrix &target);

GroupMetrics evaluate(const GruModel &model, const WindowSet &test);

struct SweepRow {
  std::size_t hidden = 0;
  std::size_t layers = 0;
  double train_loss = 0.0;       // final epoch
  double best_train_loss = 0.0;  // epoch of the best validation loss
  double valid_loss = 0.0;       // best validation loss
  std::size_t param_count = 0;
  int epochs = 0;
  std::optional<std::string> error;  // Diverged cells
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (hidden, layers)
  std::optional<std::size_t> best;
  std::size_t adopted_hidden = 256;
  std::size_t adopted_layers = 2;
};

SweepResult sweep(const std::vector<std::size_t> &hiddens, const std::vector<std::size_t> &layers,
                  const WindowSet &train_set, const WindowSet &valid_set, const NormStats &norm,
                  const TrainConfig &base);

void write_sweep_csv(const std::filesystem::path &path, const SweepResult &result);

}  // namespace thermotwin
