#pragma once

#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mimo/data/dataset.hpp"
#include "mimo/json_util.hpp"
#include "mimo/model/model.hpp"
#include "mimo/training/loss.hpp"
#include "mimo/training/optim.hpp"

namespace mimo {

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.5;
  double min_lr = 1e-6;
  double plateau_threshold = 1e-6;
  LossNorm loss_norm = LossNorm::per_frame;
  std::uint64_t seed = 0;

  bool operator==(const TrainOptions&) const = default;
};

inline Json to_json(const TrainOptions& o) {
  return Json{{"steps", o.steps},
              {"batch_size", o.batch_size},
              {"lr", o.lr},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"eps", o.eps},
              {"clip_norm", o.clip_norm},
              {"plateau_patience", o.plateau_patience},
              {"plateau_factor", o.plateau_factor},
              {"min_lr", o.min_lr},
              {"plateau_threshold", o.plateau_threshold},
              {"loss_norm", to_string(o.loss_norm)},
              {"seed", o.seed}};
}

/// Reads the known keys of `j` into `o`; the caller decides about leftovers.
inline void read_train_options(JsonReader& r, TrainOptions& o) {
  std::string norm = to_string(o.loss_norm);
  r.get("steps", o.steps)
      .get("batch_size", o.batch_size)
      .get("lr", o.lr)
      .get("beta1", o.beta1)
      .get("beta2", o.beta2)
      .get("eps", o.eps)
      .get("clip_norm", o.clip_norm)
      .get("plateau_patience", o.plateau_patience)
      .get("plateau_factor", o.plateau_factor)
      .get("min_lr", o.min_lr)
      .get("plateau_threshold", o.plateau_threshold)
      .get("loss_norm", norm)
      .get("seed", o.seed);
  o.loss_norm = loss_norm_from_string(norm);
  if (o.batch_size < 1) throw UsageError("train.batch_size must be >= 1");
  if (!(o.lr > 0.0)) throw UsageError("train.lr must be > 0");
}

struct LossRecord {
  std::size_t step = 0;  // 1-based index of the update
  double loss = 0.0;
  double lr = 0.0;  // learning rate used by that update

  bool operator==(const LossRecord&) const = default;
};

inline void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& history, const std::string& config_hash) {
  if (!config_hash.empty()) os << "# config_hash " << config_hash << '\n';
  os << "step,loss,lr\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.lr);
    os << buf;
  }
}

/// Everything that evolves during training.
struct TrainState {
  Parameters params;
  OptimState optim;
  PlateauScheduler scheduler;
  std::size_t step = 0;
  std::vector<LossRecord> history;
  Rng shuffle_rng;
  std::string epoch_rng_state;  // shuffle_rng before drawing the current epoch's order
  std::vector<std::size_t> epoch_order;
};

inline std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 0); }
inline std::uint64_t shuffle_seed(std::uint64_t seed) { return derive_seed(seed, 1); }

inline TrainState init_train_state(const ModelConfig& c, const TrainOptions& o) {
  c.validate();
  TrainState s;
  Rng init(init_seed(o.seed));
  s.params = init_parameters(c, init);
  s.optim.lr = o.lr;
  s.optim.beta1 = o.beta1;
  s.optim.beta2 = o.beta2;
  s.optim.eps = o.eps;
  s.scheduler.patience = o.plateau_patience;
  s.scheduler.factor = o.plateau_factor;
  s.scheduler.min_lr = o.min_lr;
  s.scheduler.threshold = o.plateau_threshold;
  s.shuffle_rng = Rng(shuffle_seed(o.seed));
  return s;
}

inline std::size_t steps_per_epoch(std::size_t sequences, std::size_t batch) {
  return std::max<std::size_t>(1, sequences / std::min(batch, sequences));
}

namespace detail {

inline void draw_epoch_order(TrainState& s, std::size_t n) {
  s.epoch_rng_state = s.shuffle_rng.state();
  s.epoch_order.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.epoch_order[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(s.epoch_order[i], s.epoch_order[s.shuffle_rng.uniform_int(i + 1)]);
}

inline std::string finiteness_report(const ForwardResult& r, const Parameters& p) {
  std::string out;
  for (std::size_t i = 0; i < r.layer_predictions.size(); ++i)
    if (!r.layer_predictions[i].all_finite()) out += " decoder layer " + std::to_string(i) + " output;";
  for (const auto& [name, t] : p) {
    if (!t.all_finite()) out += " parameter " + name + ";";
    for (double g : t.grad())
      if (!std::isfinite(g)) {
        out += " gradient " + name + ";";
        break;
      }
  }
  return out.empty() ? " all tensors finite (loss overflowed)" : out;
}

}  // namespace detail

using StepCallback = std::function<void(const TrainState&)>;

/// Runs updates until s.step == o.steps. Sequence windows are the first m
/// frames (inputs) and the following out_frames() frames (targets); batch
/// order is a per-epoch shuffle, drop-last. The scheduler sees the mean loss
/// of each completed epoch.
inline void train(const ModelConfig& c, const TrainOptions& o, const Dataset& data, TrainState& s,
                  const StepCallback& on_step = {}) {
  const std::size_t n_out = c.out_frames();
  if (data.L < c.m + n_out)
    throw UsageError("train: sequences have " + std::to_string(data.L) + " frames, need m + n = " +
                     std::to_string(c.m + n_out));
  if (data.C != c.channels_in || data.H != c.height || data.W != c.width)
    throw UsageError("train: data frames are " + std::to_string(data.C) + "x" + std::to_string(data.H) + "x" +
                     std::to_string(data.W) + ", model expects " + std::to_string(c.channels_in) + "x" +
                     std::to_string(c.height) + "x" + std::to_string(c.width));
  if (data.N < 1) throw UsageError("train: empty dataset");
  check_parameters(s.params, c);
  const std::size_t B = std::min(o.batch_size, data.N);
  const std::size_t spe = steps_per_epoch(data.N, o.batch_size);
  s.params.set_requires_grad(true);

  while (s.step < o.steps) {
    const std::size_t k = s.step % spe;
    if (k == 0) {
      detail::draw_epoch_order(s, data.N);
    } else if (s.epoch_order.size() != data.N) {
      // Resumed mid-epoch: replay this epoch's shuffle.
      s.shuffle_rng.set_state(s.epoch_rng_state);
      detail::draw_epoch_order(s, data.N);
    }
    std::vector<std::size_t> seqs(s.epoch_order.begin() + static_cast<std::ptrdiff_t>(k * B),
                                  s.epoch_order.begin() + static_cast<std::ptrdiff_t>((k + 1) * B));
    Tensor x = data.batch(seqs, 0, c.m);
    Tensor y = data.batch(seqs, c.m, n_out);

    ForwardResult r = model_forward(x, s.params, c);
    Tensor loss = prediction_loss(r.layer_predictions, y, c.deep_supervision, o.loss_norm);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      Tape::current().reset();
      throw NumericError("train: non-finite loss at step " + std::to_string(s.step + 1) + ";" +
                         detail::finiteness_report(r, s.params));
    }
    backward(loss);
    if (o.clip_norm > 0.0) clip_grad_norm(s.params, o.clip_norm);
    for (const auto& [name, t] : s.params)
      for (double g : t.grad())
        if (!std::isfinite(g)) throw NumericError("train: non-finite gradient at step " + std::to_string(s.step + 1) +
                                                  ";" + detail::finiteness_report(r, s.params));
    const double used_lr = s.optim.lr;
    adam_step(s.params, s.optim);
    ++s.step;
    s.history.push_back({s.step, value, used_lr});

    if (s.step % spe == 0) {
      double sum = 0.0;
      for (std::size_t i = s.history.size() - spe; i < s.history.size(); ++i) sum += s.history[i].loss;
      s.optim.lr = s.scheduler.step(sum / static_cast<double>(spe), s.optim.lr);
      s.epoch_rng_state = s.shuffle_rng.state();
    }
    if (on_step) on_step(s);
  }
}

/// Rounds every parameter to float32, the checkpoint storage precision.
inline void round_to_storage(Parameters& p) {
  for (auto& [_, t] : p)
    for (double& v : t.mutable_data()) v = static_cast<float>(v);
}

}  // namespace mimo
