// SPDX-License-Identifier: Apache-2.0
#include "thermotwin/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"
#include "thermotwin/error.hpp"

namespace thermotwin {

SplitRanges split_sequential(std::size_t n) {
  if (n < 50) throw Error(Errc::TooShort, "need at least 50 steps, got " + std::to_string(n));
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_valid = n / 10;
  return {{0, n_train}, {n_train, n_train + n_valid}, {n_train + n_valid, n}};
}

Dataset pack_dataset(const Trajectory &trajectory) {
  Dataset d{Matrix(trajectory.size(), kInputDim), Matrix(trajectory.size(), kOutputDim)};
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto in = pack_input(trajectory[i]);
    const auto out = pack_output(trajectory[i]);
    std::copy(in.begin(), in.end(), d.inputs.row(i).begin());
    std::copy(out.begin(), out.end(), d.outputs.row(i).begin());
  }
  return d;
}

std::vector<WindowSample> make_windows(IndexRange range, const Dataset &data,
                                       std::size_t input_steps, std::size_t output_steps) {
  const std::size_t span = input_steps + output_steps;
  if (range.end > data.size() || range.begin > range.end)
    throw Error(Errc::OutOfRange, "window range exceeds the dataset");
  if (range.size() < span)
    throw Error(Errc::TooShort, "range of " + std::to_string(range.size()) +
                                    " steps is shorter than one window");
  std::vector<WindowSample> out;
  out.reserve(range.size() - span + 1);
  for (std::size_t k = range.begin; k + span <= range.end; ++k) {
    WindowSample s{Matrix(input_steps, data.inputs.cols()),
                   Matrix(output_steps, data.outputs.cols()), k};
    std::copy(data.inputs.row(k).data(), data.inputs.row(k).data() + s.input.size(),
              s.input.data());
    const auto first = data.outputs.row(k + input_steps);
    std::copy(first.data(), first.data() + s.target.size(), s.target.data());
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void column_stats(const Matrix &m, IndexRange range, std::vector<double> &mean,
                  std::vector<double> &std_dev) {
  const std::size_t n = range.size();
  mean.assign(m.cols(), 0.0);
  std_dev.assign(m.cols(), 0.0);
  for (std::size_t r = range.begin; r < range.end; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  for (double &v : mean) v /= static_cast<double>(n);
  for (std::size_t r = range.begin; r < range.end; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double e = m(r, c) - mean[c];
      std_dev[c] += e * e;
    }
  for (double &v : std_dev) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12)) v = 1.0;
  }
}

}  // namespace

NormStats fit_norm(const Dataset &data, IndexRange range) {
  if (range.size() == 0 || range.end > data.size())
    throw Error(Errc::OutOfRange, "normalization range is empty or out of bounds");
  NormStats s;
  column_stats(data.inputs, range, s.in_mean, s.in_std);
  column_stats(data.outputs, range, s.out_mean, s.out_std);
  return s;
}

Matrix zscore(const NormStats &stats, const Matrix &block, ZDirection direction) {
  const std::vector<double> *mean = nullptr;
  const std::vector<double> *sd = nullptr;
  if (block.cols() == stats.in_mean.size()) {
    mean = &stats.in_mean;
    sd = &stats.in_std;
  } else if (block.cols() == stats.out_mean.size()) {
    mean = &stats.out_mean;
    sd = &stats.out_std;
  } else {
    throw Error(Errc::ShapeMismatch, "block has " + std::to_string(block.cols()) +
                                         " columns, matching neither input nor output stats");
  }
  Matrix out(block.rows(), block.cols());
  for (std::size_t r = 0; r < block.rows(); ++r)
    for (std::size_t c = 0; c < block.cols(); ++c)
      out(r, c) = direction == ZDirection::Forward ? (block(r, c) - (*mean)[c]) / (*sd)[c]
                                                   : block(r, c) * (*sd)[c] + (*mean)[c];
  return out;
}

WindowSet make_window_set(const std::vector<WindowSample> &samples, const NormStats &stats) {
  WindowSet set;
  set.count = samples.size();
  if (samples.empty()) return set;
  const std::size_t t_in = samples.front().input.rows();
  const std::size_t head = samples.front().target.size();
  set.input_steps = t_in;
  set.inputs = Matrix(set.count * t_in, samples.front().input.cols());
  set.targets = Matrix(set.count, head);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Matrix x = zscore(stats, samples[i].input, ZDirection::Forward);
    const Matrix y = zscore(stats, samples[i].target, ZDirection::Forward);
    std::copy(x.data(), x.data() + x.size(), set.inputs.row(i * t_in).data());
    std::copy(y.data(), y.data() + y.size(), set.targets.row(i).data());
    set.origins.push_back(samples[i].origin_index);
  }
  return set;
}

SequenceBatch gather_batch(const WindowSet &set, std::span<const std::size_t> indices,
                           Matrix *targets) {
  const std::size_t B = indices.size();
  const std::size_t T = set.input_steps;
  const std::size_t d = set.inputs.cols();
  SequenceBatch batch{B, T, Matrix(B * T, d)};
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      const auto src = set.inputs.row(indices[b] * T + t);
      std::copy(src.begin(), src.end(), batch.x.row(t * B + b).begin());
    }
  if (targets) {
    *targets = Matrix(B, set.targets.cols());
    for (std::size_t b = 0; b < B; ++b) {
      const auto src = set.targets.row(indices[b]);
      std::copy(src.begin(), src.end(), targets->row(b).begin());
    }
  }
  return batch;
}

void TrainConfig::validate() const {
  if (!is_standard_hidden(hidden))
    throw Error(Errc::InvalidConfig, "hidden must be one of 128, 256, 512, 1024");
  if (layers < 1 || layers > 3) throw Error(Errc::InvalidConfig, "layers must be 1, 2 or 3");
  if (batch == 0) throw Error(Errc::InvalidConfig, "batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(Errc::InvalidConfig, "lr must be positive");
  if (!(weight_decay >= 0.0)) throw Error(Errc::InvalidConfig, "weight_decay must be >= 0");
  if (early_stop_patience < 1) throw Error(Errc::InvalidConfig, "patience must be >= 1");
  if (max_epochs < 1) throw Error(Errc::InvalidConfig, "max_epochs must be >= 1");
}

TrainConfig load_train_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path.string());
  TrainConfig c;
  try {
    auto j = nlohmann::json::parse(in);
    if (auto it = j.find("train"); it != j.end()) j = *it;
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception &e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

double dataset_loss(const GruModel &model, const WindowSet &set, std::size_t batch) {
  if (set.count == 0) return 0.0;
  double sum = 0.0;
  std::vector<std::size_t> idx;
  Matrix targets;
  for (std::size_t start = 0; start < set.count; start += batch) {
    const std::size_t stop = std::min(set.count, start + batch);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto cache = forward(model, gather_batch(set, idx, &targets));
    sum += loss_mse(cache.output, targets) * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(set.count);
}

TrainResult train(const WindowSet &train_set, const WindowSet &valid_set, const NormStats &norm,
                  const TrainConfig &config, const EpochCallback &on_epoch) {
  config.validate();
  if (train_set.count == 0 || valid_set.count == 0)
    throw Error(Errc::TooShort, "training and validation sets must be non-empty");

  GruDims dims;
  dims.input = train_set.inputs.cols();
  dims.hidden = config.hidden;
  dims.layers = config.layers;
  dims.input_steps = train_set.input_steps;
  dims.output = norm.out_mean.size();
  if (dims.output == 0 || train_set.targets.cols() % dims.output != 0)
    throw Error(Errc::ShapeMismatch, "targets do not match the output statistics");
  dims.output_steps = train_set.targets.cols() / dims.output;

  GruModel model = make_model(dims, config.seed);
  model.norm = norm;
  AdamState adam = make_adam(model.params, {config.lr, config.weight_decay});
  PlateauScheduler scheduler;
  EarlyStopping stopper(config.early_stop_patience);
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  TrainResult result;
  result.model = model;
  std::vector<std::size_t> order(train_set.count);
  std::iota(order.begin(), order.end(), 0);
  GruParams grads;
  Matrix targets;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto cache = forward(model, gather_batch(train_set, idx, &targets));
      const double loss = backward(model, cache, targets, grads);
      if (!std::isfinite(loss))
        throw Error(Errc::Diverged, "non-finite training loss at epoch " + std::to_string(epoch));
      adam_step(model, grads, adam);
      train_sum += loss * static_cast<double>(idx.size());
    }
    const double valid = dataset_loss(model, valid_set, config.batch);
    if (!std::isfinite(valid))
      throw Error(Errc::Diverged, "non-finite validation loss at epoch " + std::to_string(epoch));

    const EpochRecord rec{epoch, train_sum / static_cast<double>(order.size()), valid,
                          adam.config.lr};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (stopper.update(valid)) {
      result.model = model;
      result.best_epoch = epoch;
      result.best_valid = valid;
    }
    adam.config.lr = scheduler.step(valid, adam.config.lr);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path &path, const std::vector<EpochRecord> &history) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::CorruptFile, "cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,valid_loss,lr\n";
  for (const auto &r : history)
    out << r.epoch << ',' << r.train_loss << ',' << r.valid_loss << ',' << r.lr << '\n';
}

GroupMetrics group_metrics(const Matrix &predicted, const Matrix &target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols() ||
      predicted.cols() % kOutputDim != 0)
    throw Error(Errc::ShapeMismatch, "metric operands must be matching n x (T_d*29) blocks");
  const auto &cat = canonical_catalog();
  const auto &order = cat.output_order();

  struct Acc {
    double abs = 0.0, sq = 0.0;
    std::size_t n = 0;
  };
  std::array<Acc, 5> acc{};
  std::array<int, kOutputDim> slot{};
  std::array<double, kOutputDim> scale{};
  for (std::size_t c = 0; c < kOutputDim; ++c) {
    const auto &spec = cat.at(order[c]);
    scale[c] = 1.0;
    switch (spec.group) {
      case ChannelGroup::Temperature: slot[c] = 0; break;
      case ChannelGroup::Pressure: slot[c] = 1; break;
      case ChannelGroup::Flow: slot[c] = 2; break;
      case ChannelGroup::Power: slot[c] = 3; break;
      case ChannelGroup::Actuator:
        slot[c] = 4;
        scale[c] = 100.0 / spec.max_value;
        break;
      default: slot[c] = -1;
    }
  }
  for (std::size_t r = 0; r < predicted.rows(); ++r)
    for (std::size_t k = 0; k < predicted.cols(); ++k) {
      const std::size_t c = k % kOutputDim;
      if (slot[c] < 0) continue;
      const double e = (predicted(r, k) - target(r, k)) * scale[c];
      Acc &a = acc[static_cast<std::size_t>(slot[c])];
      a.abs += std::abs(e);
      a.sq += e * e;
      ++a.n;
    }
  auto finish = [](const Acc &a) {
    if (a.n == 0) return GroupError{};
    return GroupError{a.abs / static_cast<double>(a.n),
                      std::sqrt(a.sq / static_cast<double>(a.n)), a.n};
  };
  return {finish(acc[0]), finish(acc[1]), finish(acc[2]), finish(acc[3]), finish(acc[4])};
}

GroupMetrics evaluate(const GruModel &model, const WindowSet &test) {
  if (model.norm.empty()) throw Error(Errc::InvalidConfig, "model has no normalization stats");
  const std::size_t steps = model.dims.output_steps;
  const std::size_t d_out = model.dims.output;
  Matrix pred(test.count, steps * d_out);
  Matrix truth(test.count, steps * d_out);
  std::vector<std::size_t> idx;
  Matrix targets;
  for (std::size_t start = 0; start < test.count; start += 128) {
    const std::size_t stop = std::min(test.count, start + 128);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto cache = forward(model, gather_batch(test, idx, &targets));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      Matrix p(steps, d_out), t(steps, d_out);
      std::copy(cache.output.row(b).begin(), cache.output.row(b).end(), p.data());
      std::copy(targets.row(b).begin(), targets.row(b).end(), t.data());
      const Matrix pp = zscore(model.norm, p, ZDirection::Inverse);
      const Matrix tp = zscore(model.norm, t, ZDirection::Inverse);
      std::copy(pp.data(), pp.data() + pp.size(), pred.row(start + b).data());
      std::copy(tp.data(), tp.data() + tp.size(), truth.row(start + b).data());
    }
  }
  return group_metrics(pred, truth);
}

SweepResult sweep(const std::vector<std::size_t> &hiddens, const std::vector<std::size_t> &layers,
                  const WindowSet &train_set, const WindowSet &valid_set, const NormStats &norm,
                  const TrainConfig &base) {
  if (hiddens.empty() || layers.empty()) throw Error(Errc::InvalidConfig, "empty sweep grid");
  std::vector<std::size_t> hs = hiddens, ls = layers;
  std::sort(hs.begin(), hs.end());
  std::sort(ls.begin(), ls.end());
  SweepResult out;
  for (std::size_t h : hs)
    for (std::size_t l : ls) {
      TrainConfig cfg = base;
      cfg.hidden = h;
      cfg.layers = l;
      SweepRow row;
      row.hidden = h;
      row.layers = l;
      row.param_count = param_count({train_set.inputs.cols(), h, l, train_set.input_steps,
                                     train_set.targets.cols() / norm.out_mean.size(),
                                     norm.out_mean.size()});
      try {
        const TrainResult r = train(train_set, valid_set, norm, cfg);
        row.train_loss = r.history.back().train_loss;
        row.best_train_loss = r.history[static_cast<std::size_t>(r.best_epoch - 1)].train_loss;
        row.valid_loss = r.best_valid;
        row.epochs = static_cast<int>(r.history.size());
      } catch (const Error &e) {
        if (e.code() != Errc::Diverged) throw;
        row.error = e.what();
        row.train_loss = row.best_train_loss = row.valid_loss =
            std::numeric_limits<double>::quiet_NaN();
      }
      if (!row.error && (!out.best || row.valid_loss < out.rows[*out.best].valid_loss))
        out.best = out.rows.size();
      out.rows.push_back(row);
    }
  return out;
}

void write_sweep_csv(const std::filesystem::path &path, const SweepResult &result) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::CorruptFile, "cannot write " + path.string());
  out.precision(17);
  out << "hidden,layers,train_loss,valid_loss,param_count\n";
  for (const auto &r : result.rows)
    out << r.hidden << ',' << r.layers << ',' << r.train_loss << ',' << r.valid_loss << ','
        << r.param_count << '\n';
}

}  // namespace thermotwin
