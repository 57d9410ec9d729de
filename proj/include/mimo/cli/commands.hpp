#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mimo/baselines.hpp"
#include "mimo/cli/run_config.hpp"
#include "mimo/data.hpp"
#include "mimo/metrics.hpp"
#include "mimo/model.hpp"
#include "mimo/numerics.hpp"
#include "mimo/training.hpp"

namespace mimo {

// Stable exit codes for scripting.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4, kExitOther = 1 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitOther;
}

/// MIMO_SEER_THREADS caps intra-op parallelism; 0 or unset-and-serial means
/// one thread. Returns the thread count in effect.
inline int apply_thread_env() {
  int n = 0;
  if (const char* v = std::getenv("MIMO_SEER_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || parsed < 0) throw UsageError("MIMO_SEER_THREADS must be a non-negative integer");
    n = static_cast<int>(parsed);
  } else {
    return Eigen::nbThreads();
  }
  const int threads = std::max(n, 1);
  Eigen::setNbThreads(threads);
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  return threads;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw FormatError("write to '" + path.string() + "' failed");
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create directory '" + dir + "': " + ec.message());
}

class Log {
 public:
  explicit Log(bool quiet, std::ostream& os = std::cerr) : quiet_(quiet), os_(os) {}
  template <class... A>
  void operator()(const A&... parts) const {
    if (quiet_) return;
    (os_ << ... << parts) << '\n';
  }

 private:
  bool quiet_;
  std::ostream& os_;
};

inline Dataset load_dataset(const DataSection& d) {
  Dataset ds = d.path.empty() ? generate_sprites(d.sprites) : read_vseq(d.path);
  ds.check();
  return ds;
}

inline std::string format_g(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace detail

/// Predicts `horizon` frames after each input window, in batch chunks so the
/// graph-free forward stays small. Recursion kicks in past the native output.
inline Tensor predict_frames(const ModelConfig& c, const Parameters& p, const Tensor& inputs, std::size_t horizon,
                             RolloutMode mode = RolloutMode::block, std::size_t chunk = 32) {
  const std::size_t B = inputs.dim(0);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < B; b += chunk)
    parts.push_back(miso_rollout(p, c, slice(inputs, 0, b, std::min(B, b + chunk)), horizon, mode));
  return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

inline std::size_t eval_horizon(const ModelConfig& c, const EvalSection& e) { return e.horizon ? e.horizon : c.n; }

/// Evaluates the model on every sequence of `data`: inputs are frames
/// [0, m), truth frames [m, m + horizon).
inline MetricsReport evaluate_model(const ModelConfig& c, const Parameters& p, const Dataset& data,
                                    const EvalSection& e, const std::string& hash) {
  const std::size_t horizon = eval_horizon(c, e);
  if (horizon < 1) throw UsageError("eval: horizon must be >= 1");
  if (data.L < c.m + horizon)
    throw UsageError("eval: sequences have " + std::to_string(data.L) + " frames, horizon " +
                     std::to_string(horizon) + " needs " + std::to_string(c.m + horizon));
  if (data.C != c.channels_in || data.H != c.height || data.W != c.width)
    throw UsageError("eval: data frames do not match the model's frame size");
  Tensor pred = predict_frames(c, p, data.frames(0, c.m), horizon);
  EvalOptions opt;
  opt.csi_thresholds = e.csi_thresholds;
  opt.max_val = e.max_val;
  MetricsReport r = evaluate(pred, data.frames(c.m, horizon), opt);
  r.config_hash = hash;
  r.recursive = horizon > c.out_frames();
  return r;
}

inline std::string metrics_json_text(const MetricsReport& r) { return to_json(r).dump(2) + "\n"; }

// ------------------------------------------------------------- gen-data ----

struct GenDataOptions {
  SpriteWorldConfig sprites{};
  std::optional<std::string> idx_images, idx_labels;
  std::string out = "data.vseq";
  bool quiet = false;
};

/// Writes the VSEQ file and `<out>.json` describing how it was made.
inline Dataset cmd_gen_data(const GenDataOptions& o) {
  detail::Log log(o.quiet);
  SpriteWorldConfig sc = o.sprites;
  std::optional<SpriteBank> bank;
  if (o.idx_labels && !o.idx_images) throw UsageError("gen-data: --idx-labels needs --idx-images");
  if (o.idx_images) {
    bank = read_idx(*o.idx_images, o.idx_labels);
    sc.kind = SpriteKind::digit;
  }
  Dataset ds = generate_sprites(sc, bank ? &*bank : nullptr);
  Json meta{{"format", "VSEQ"},
            {"config_hash", fnv1a_hex(to_json(sc).dump() + (o.idx_images ? *o.idx_images : ""))},
            {"provenance", ds.provenance},
            {"generator", "sprites"},
            {"sprites", to_json(sc)},
            {"idx_images", o.idx_images ? Json(*o.idx_images) : Json(nullptr)},
            {"idx_labels", o.idx_labels ? Json(*o.idx_labels) : Json(nullptr)},
            {"shape", {{"N", ds.N}, {"L", ds.L}, {"C", ds.C}, {"H", ds.H}, {"W", ds.W}}}};
  const std::filesystem::path path(o.out);
  if (path.has_parent_path()) detail::ensure_dir(path.parent_path().string());
  write_vseq(ds, o.out);
  detail::write_file(o.out + ".json", meta.dump(2) + "\n");
  log("wrote ", o.out, " (", ds.N, " sequences x ", ds.L, " frames, ", ds.H, "x", ds.W, ")");
  return ds;
}

// ---------------------------------------------------------------- train ----

struct TrainCmdOptions {
  RunConfig config{};
  std::optional<std::string> resume;
  bool quiet = false;
};

struct TrainOutcome {
  std::string config_hash;
  std::string out_dir;
  TrainState state;
  MetricsReport metrics;
};

namespace detail {

// Run-config JSON minus the fields that may legitimately change on resume.
inline Json resume_identity(const RunConfig& c) {
  Json j = to_json(c);
  j["train"].erase("steps");
  j.erase("checkpoint_every");
  j.erase("out");
  j.erase("eval");
  return j;
}

}  // namespace detail

/// Trains per config, writing checkpoint.mvpc, loss.csv, metrics.json and
/// config.json into config.out. Final parameters are rounded to checkpoint
/// precision before evaluation so a reloaded checkpoint scores identically.
inline TrainOutcome cmd_train(const TrainCmdOptions& o) {
  detail::Log log(o.quiet);
  const RunConfig& cfg = o.config;
  cfg.model.validate();
  TrainOutcome res;
  res.config_hash = config_hash(cfg);
  res.out_dir = cfg.out;
  detail::ensure_dir(cfg.out);
  const std::filesystem::path dir(cfg.out);

  Dataset all = detail::load_dataset(cfg.data);
  auto [train_ds, eval_ds] = split(all, cfg.data.train_frac, cfg.data.split_seed);

  if (o.resume) {
    Checkpoint ck = load_checkpoint(*o.resume);
    RunConfig prev = run_config_from_json(ck.run_config);
    if (detail::resume_identity(prev) != detail::resume_identity(cfg))
      throw UsageError("train: checkpoint '" + *o.resume + "' was produced by an incompatible config (" +
                       ck.config_hash + ")");
    if (ck.state.step > cfg.train.steps)
      throw UsageError("train: checkpoint is at step " + std::to_string(ck.state.step) + ", beyond --steps " +
                       std::to_string(cfg.train.steps));
    res.state = std::move(ck.state);
    log("resuming from step ", res.state.step);
  } else {
    res.state = init_train_state(cfg.model, cfg.train);
  }

  auto checkpoint = [&](const TrainState& s) {
    save_checkpoint(Checkpoint{to_json(cfg), res.config_hash, cfg.model, s}, (dir / "checkpoint.mvpc").string());
  };
  const std::size_t every_log = std::max<std::size_t>(1, cfg.train.steps / 20);
  train(cfg.model, cfg.train, train_ds, res.state, [&](const TrainState& s) {
    if (s.step % every_log == 0 || s.step == cfg.train.steps)
      log("step ", s.step, "/", cfg.train.steps, " loss ", detail::format_g(s.history.back().loss), " lr ",
          detail::format_g(s.history.back().lr));
    if (cfg.checkpoint_every && s.step % cfg.checkpoint_every == 0 && s.step < cfg.train.steps) checkpoint(s);
  });

  round_to_storage(res.state.params);
  checkpoint(res.state);
  std::ostringstream loss;
  write_loss_csv(loss, res.state.history, res.config_hash);
  detail::write_file(dir / "loss.csv", loss.str());
  Json resolved = to_json(cfg);
  resolved["config_hash"] = res.config_hash;
  detail::write_file(dir / "config.json", resolved.dump(2) + "\n");

  res.metrics = evaluate_model(cfg.model, res.state.params, eval_ds, cfg.eval, res.config_hash);
  detail::write_file(dir / "metrics.json", metrics_json_text(res.metrics));
  log("eval mse/pixel ", detail::format_g(res.metrics.aggregate.mse_pixel), " ssim ",
      detail::format_g(res.metrics.aggregate.ssim), " over ", res.metrics.sequences, " held-out sequences");
  return res;
}

// ---------------------------------------------------------------- shared ----

// Options shared by commands that start from a checkpoint.
struct CheckpointInput {
  std::string checkpoint;
  std::optional<std::string> data;       // VSEQ path overriding the run's data
  std::optional<RunConfig> config;       // replaces the data and eval sections
  bool all_sequences = false;            // use every sequence, not the eval split
  std::optional<std::string> out;        // defaults to the checkpoint's directory
  bool quiet = false;
};

struct LoadedRun {
  Checkpoint ck;
  RunConfig cfg;
  Dataset data;
  std::string out_dir;
};

inline LoadedRun load_run(const CheckpointInput& in) {
  LoadedRun r;
  r.ck = load_checkpoint(in.checkpoint);
  r.cfg = run_config_from_json(r.ck.run_config);
  if (in.config) {
    r.cfg.data = in.config->data;
    r.cfg.eval = in.config->eval;
  }
  if (in.data) r.cfg.data.path = *in.data;
  Dataset all = detail::load_dataset(r.cfg.data);
  r.data = in.all_sequences ? all : split(all, r.cfg.data.train_frac, r.cfg.data.split_seed).second;
  const auto parent = std::filesystem::path(in.checkpoint).parent_path();
  r.out_dir = in.out ? *in.out : (parent.empty() ? std::string(".") : parent.string());
  detail::ensure_dir(r.out_dir);
  return r;
}

// ----------------------------------------------------------------- eval ----

struct EvalCmdOptions {
  CheckpointInput input;
  std::optional<std::size_t> horizon;
  std::optional<std::vector<double>> csi_thresholds;
};

/// Scores the checkpoint and writes eval.json.
inline MetricsReport cmd_eval(const EvalCmdOptions& o) {
  if (o.horizon && *o.horizon < 1) throw UsageError("eval: --horizon must be >= 1");
  LoadedRun run = load_run(o.input);
  if (o.horizon) run.cfg.eval.horizon = *o.horizon;
  if (o.csi_thresholds) run.cfg.eval.csi_thresholds = *o.csi_thresholds;
  MetricsReport r = evaluate_model(run.ck.model, run.ck.state.params, run.data, run.cfg.eval, run.ck.config_hash);
  detail::write_file(std::filesystem::path(run.out_dir) / "eval.json", metrics_json_text(r));
  detail::Log(o.input.quiet)("eval mse/pixel ", detail::format_g(r.aggregate.mse_pixel), " horizon ", r.horizon,
                             r.recursive ? " (recursive)" : "");
  return r;
}

// -------------------------------------------------------------- compare ----

struct CompareCmdOptions {
  CheckpointInput input;
  std::optional<std::size_t> horizon;  // default: every frame after the inputs
  CurveMetric metric = CurveMetric::mse_pixel;
  bool wide = false;
  bool sweep_m = false;
};

struct CompareOutcome {
  std::vector<RolloutCurve> curves;  // mimo, miso, copy_last
  std::vector<std::pair<std::size_t, double>> sweep;  // (input frames, per-pixel MSE)
};

/// Frame-wise error curves of block-recursive (mimo), single-frame recursive
/// (miso) and copy_last predictions; optionally the native-horizon error as
/// a function of how many of the m input frames are shown.
inline CompareOutcome cmd_compare(const CompareCmdOptions& o) {
  LoadedRun run = load_run(o.input);
  const ModelConfig& c = run.ck.model;
  const Parameters& p = run.ck.state.params;
  if (run.data.L <= c.m) throw UsageError("compare: sequences need more than m frames");
  const std::size_t horizon = o.horizon ? *o.horizon : run.data.L - c.m;
  if (horizon < 1) throw UsageError("compare: --horizon must be >= 1");
  if (run.data.L < c.m + horizon)
    throw UsageError("compare: sequences have " + std::to_string(run.data.L) + " frames, horizon " +
                     std::to_string(horizon) + " needs " + std::to_string(c.m + horizon));
  const Tensor inputs = run.data.frames(0, c.m);
  const Tensor truth = run.data.frames(c.m, horizon);

  CompareOutcome res;
  res.curves.push_back(
      framewise_error_curve(predict_frames(c, p, inputs, horizon, RolloutMode::block), truth, "mimo", o.metric));
  res.curves.push_back(
      framewise_error_curve(predict_frames(c, p, inputs, horizon, RolloutMode::first_frame), truth, "miso", o.metric));
  res.curves.push_back(framewise_error_curve(copy_last(inputs, horizon), truth, "copy_last", o.metric));

  const std::filesystem::path dir(run.out_dir);
  std::ostringstream csv;
  csv << "# config_hash " << run.ck.config_hash << "\n# metric " << to_string(o.metric) << '\n';
  if (o.wide)
    write_curves_wide_csv(csv, res.curves);
  else
    write_curves_csv(csv, res.curves);
  detail::write_file(dir / "curves.csv", csv.str());

  if (o.sweep_m) {
    const std::size_t n_out = c.out_frames();
    const Tensor native_truth = run.data.frames(c.m, n_out);
    std::ostringstream sw;
    sw << "# config_hash " << run.ck.config_hash << "\nm,mse,mse_pixel\n";
    for (std::size_t k = 1; k <= c.m; ++k) {
      const Tensor pred = predict_frames(c, p, run.data.frames(c.m - k, k), n_out);
      const double mp = mse_per_pixel(pred, native_truth);
      res.sweep.emplace_back(k, mp);
      sw << k << ',' << detail::format_g(mse(pred, native_truth), 10) << ',' << detail::format_g(mp, 10) << '\n';
    }
    detail::write_file(dir / "sweep_m.csv", sw.str());
  }
  detail::Log(o.input.quiet)("wrote ", (dir / "curves.csv").string(), o.sweep_m ? " and sweep_m.csv" : "");
  return res;
}

// -------------------------------------------------------------- ar-demo ----

struct ArDemoOptions {
  double A = 0.5;
  double sigma = 1.0;
  std::size_t steps = 20;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
};

struct ArDemoRow {
  std::size_t step;
  double empirical, closed_form, rel_err;
};

inline std::vector<ArDemoRow> ar_demo_table(const ArDemoOptions& o) {
  if (o.steps < 1) throw UsageError("ar-demo: --steps must be >= 1");
  const Ar1Result r = ar1_rollout(Ar1Params::scalar(o.A, o.sigma, o.steps, o.trials, o.seed));
  std::vector<ArDemoRow> rows;
  for (std::size_t k = 1; k <= o.steps; ++k) {
    const double emp = r.variance[k - 1], cf = ar1_variance_closed_form(o.A, o.sigma, k);
    const double rel = cf != 0.0 ? std::abs(emp - cf) / cf
                                 : (emp == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    rows.push_back({k, emp, cf, rel});
  }
  return rows;
}

inline void write_ar_demo_csv(std::ostream& os, const ArDemoOptions& o, const std::vector<ArDemoRow>& rows) {
  const Json params{{"A", o.A}, {"sigma", o.sigma}, {"steps", o.steps}, {"trials", o.trials}, {"seed", o.seed}};
  os << "# config_hash " << fnv1a_hex(params.dump()) << '\n' << "step,empirical,closed_form,rel_err\n";
  for (const auto& r : rows)
    os << r.step << ',' << detail::format_g(r.empirical, 10) << ',' << detail::format_g(r.closed_form, 10) << ','
       << detail::format_g(r.rel_err, 6) << '\n';
}

// ----------------------------------------------------------------- attn ----

struct AttnCmdOptions {
  CheckpointInput input;
  std::size_t sequence = 0;
  std::optional<std::size_t> layer;
  std::optional<AttentionKind> kind;
  bool sum_heads = false;
};

/// Dumps attention maps of one probe sequence to attention.csv.
inline std::vector<AttentionRecord> cmd_attn(const AttnCmdOptions& o) {
  LoadedRun run = load_run(o.input);
  const ModelConfig& c = run.ck.model;
  if (o.sequence >= run.data.N)
    throw UsageError("attn: --sequence " + std::to_string(o.sequence) + " out of range (" +
                     std::to_string(run.data.N) + " sequences)");
  if (o.layer) {
    const bool enc = o.kind && *o.kind == AttentionKind::encoder_self;
    const bool dec = o.kind && !enc;
    const std::size_t limit = enc ? c.enc_blocks : dec ? c.dec_blocks : std::max(c.enc_blocks, c.dec_blocks);
    if (*o.layer >= limit)
      throw UsageError("attn: --layer " + std::to_string(*o.layer) + " out of range (" + std::to_string(limit) +
                       (enc ? " encoder" : dec ? " decoder" : "") + " layers)");
  }
  NoGradGuard no_grad;
  ForwardOptions fo;
  fo.record_attention = true;
  ForwardResult fr = model_forward(run.data.batch({o.sequence}, 0, c.m), run.ck.state.params, c, fo);
  if (fr.attention.empty()) throw UsageError("attn: this model records no attention (2D attention disabled)");
  std::vector<AttentionRecord> recs = extract_attention(fr.attention, AttentionFilter{o.kind, o.layer, std::nullopt});
  if (recs.empty()) throw UsageError("attn: no attention maps match the requested layer/kind");
  if (o.sum_heads) recs = sum_heads(recs);
  std::ostringstream csv;
  csv << "# config_hash " << run.ck.config_hash << '\n';
  write_attention_csv(csv, recs);
  detail::write_file(std::filesystem::path(run.out_dir) / "attention.csv", csv.str());
  detail::Log(o.input.quiet)("wrote ", recs.size(), " attention maps");
  return recs;
}

}  // namespace mimo
