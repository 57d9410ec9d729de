#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mimo/cli/commands.hpp"

namespace mimo {

/// Parses argv and runs one subcommand. Returns the process exit code;
/// diagnostics go to `err`, table output (ar-demo without --out) to `out`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"mimo_seer: parallel multi-frame video prediction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, out_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "Run config JSON (missing fields take defaults)");
  app.add_option("--seed", seed, "Seed override");
  app.add_option("--out", out_path, "Output directory (gen-data: output file)");
  app.add_flag("--quiet", quiet, "Suppress progress messages");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a moving-sprite dataset (VSEQ)");
  std::optional<std::size_t> g_sprites, g_frames, g_size, g_count, g_sprite_size;
  std::optional<double> g_speed_min, g_speed_max;
  std::optional<std::string> g_kind, g_idx_images, g_idx_labels;
  bool g_no_bounce = false;
  gen->add_option("--sprites", g_sprites, "Sprites per sequence");
  gen->add_option("--frames", g_frames, "Frames per sequence");
  gen->add_option("--size", g_size, "Square canvas size in pixels");
  gen->add_option("--count", g_count, "Number of sequences");
  gen->add_option("--kind", g_kind, "Sprite shape: disk, square, cross, digit");
  gen->add_option("--sprite-size", g_sprite_size, "Sprite extent in pixels");
  gen->add_option("--speed-min", g_speed_min, "Minimum speed (pixels/frame)");
  gen->add_option("--speed-max", g_speed_max, "Maximum speed (pixels/frame)");
  gen->add_flag("--no-bounce", g_no_bounce, "Clamp at walls without reflecting");
  gen->add_option("--idx-images", g_idx_images, "IDX image file used as digit sprites");
  gen->add_option("--idx-labels", g_idx_labels, "Matching IDX label file");

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::optional<std::size_t> t_steps, t_ckpt_every;
  std::optional<std::string> t_data, t_resume;
  tr->add_option("--steps", t_steps, "Total optimizer steps");
  tr->add_option("--data", t_data, "VSEQ dataset (default: generate from config)");
  tr->add_option("--resume", t_resume, "Continue from a checkpoint");
  tr->add_option("--checkpoint-every", t_ckpt_every, "Also checkpoint every K steps");

  // Commands that read a checkpoint share these.
  struct CkFlags {
    std::string checkpoint;
    std::optional<std::string> data;
    bool all = false;
  };
  auto add_ck_flags = [](CLI::App* sub, CkFlags& f) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
    sub->add_option("--data", f.data, "VSEQ dataset (default: the run's data)");
    sub->add_flag("--all", f.all, "Use every sequence instead of the held-out split");
  };

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint");
  CkFlags e_ck;
  add_ck_flags(ev, e_ck);
  std::optional<std::size_t> e_horizon;
  std::optional<std::vector<double>> e_csi;
  ev->add_option("--horizon", e_horizon, "Frames to predict; beyond n triggers block recursion");
  ev->add_option("--csi-thresholds", e_csi, "Comma-separated CSI thresholds")->delimiter(',');

  // compare
  auto* cmp = app.add_subcommand("compare", "Frame-wise error curves of mimo, miso and copy_last");
  CkFlags c_ck;
  add_ck_flags(cmp, c_ck);
  std::optional<std::size_t> c_horizon;
  std::string c_metric = "mse_pixel";
  bool c_wide = false, c_sweep = false;
  cmp->add_option("--horizon", c_horizon, "Horizon (default: all frames after the inputs)");
  cmp->add_option("--metric", c_metric, "mse_pixel, mse, mae_pixel or mae")
      ->check(CLI::IsMember({"mse_pixel", "mse", "mae_pixel", "mae"}));
  cmp->add_flag("--wide", c_wide, "One column per strategy");
  cmp->add_flag("--sweep-m", c_sweep, "Also tabulate error against the number of input frames");

  // ar-demo
  auto* ar = app.add_subcommand("ar-demo", "Error accumulation of a linear AR(1) rollout");
  ArDemoOptions ar_opt;
  ar->add_option("--A", ar_opt.A, "Autoregressive coefficient");
  ar->add_option("--sigma", ar_opt.sigma, "Noise standard deviation");
  ar->add_option("--steps", ar_opt.steps, "Rollout length");
  ar->add_option("--trials", ar_opt.trials, "Monte-Carlo trials");

  // attn
  auto* at = app.add_subcommand("attn", "Dump attention maps for one sequence");
  CkFlags a_ck;
  add_ck_flags(at, a_ck);
  std::size_t a_seq = 0;
  std::optional<std::size_t> a_layer;
  std::optional<std::string> a_kind;
  bool a_sum = false;
  at->add_option("--sequence", a_seq, "Probe sequence index");
  at->add_option("--layer", a_layer, "Layer index");
  at->add_option("--kind", a_kind, "encoder_self, decoder_self or decoder_cross")
      ->check(CLI::IsMember({"encoder_self", "decoder_self", "decoder_cross"}));
  at->add_flag("--sum-heads", a_sum, "Sum maps over heads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_thread_env();
    std::optional<RunConfig> cfg;
    if (config_path) cfg = load_run_config(*config_path);
    auto ck_input = [&](const CkFlags& f) {
      CheckpointInput in;
      in.checkpoint = f.checkpoint;
      in.data = f.data;
      in.config = cfg;
      in.all_sequences = f.all;
      in.out = out_path;
      in.quiet = quiet;
      return in;
    };

    if (gen->parsed()) {
      GenDataOptions o;
      if (cfg) o.sprites = cfg->data.sprites;
      if (g_sprites) o.sprites.num_sprites = *g_sprites;
      if (g_frames) o.sprites.seq_len = *g_frames;
      if (g_size) o.sprites.height = o.sprites.width = *g_size;
      if (g_count) o.sprites.num_sequences = *g_count;
      if (g_kind) o.sprites.kind = sprite_kind_from_string(*g_kind);
      if (g_sprite_size) o.sprites.sprite_size = *g_sprite_size;
      if (g_speed_min) o.sprites.speed_min = *g_speed_min;
      if (g_speed_max) o.sprites.speed_max = *g_speed_max;
      if (g_no_bounce) o.sprites.bounce = false;
      if (seed) o.sprites.seed = *seed;
      o.idx_images = g_idx_images;
      o.idx_labels = g_idx_labels;
      if (out_path) o.out = *out_path;
      o.quiet = quiet;
      cmd_gen_data(o);
    } else if (tr->parsed()) {
      TrainCmdOptions o;
      if (cfg) o.config = *cfg;
      if (seed) o.config.seed = o.config.train.seed = *seed;
      if (out_path) o.config.out = *out_path;
      if (t_steps) o.config.train.steps = *t_steps;
      if (t_data) o.config.data.path = *t_data;
      if (t_ckpt_every) o.config.checkpoint_every = *t_ckpt_every;
      o.resume = t_resume;
      o.quiet = quiet;
      cmd_train(o);
    } else if (ev->parsed()) {
      EvalCmdOptions o{ck_input(e_ck), e_horizon, e_csi};
      cmd_eval(o);
    } else if (cmp->parsed()) {
      CompareCmdOptions o;
      o.input = ck_input(c_ck);
      o.horizon = c_horizon;
      o.metric = c_metric == "mse"         ? CurveMetric::mse_frame
                 : c_metric == "mae"       ? CurveMetric::mae_frame
                 : c_metric == "mae_pixel" ? CurveMetric::mae_pixel
                                           : CurveMetric::mse_pixel;
      o.wide = c_wide;
      o.sweep_m = c_sweep;
      cmd_compare(o);
    } else if (ar->parsed()) {
      if (seed) ar_opt.seed = *seed;
      const auto rows = ar_demo_table(ar_opt);
      if (out_path) {
        std::ostringstream csv;
        write_ar_demo_csv(csv, ar_opt, rows);
        detail::write_file(std::filesystem::path(*out_path) / "ar_demo.csv", csv.str());
      } else {
        write_ar_demo_csv(out, ar_opt, rows);
      }
    } else if (at->parsed()) {
      AttnCmdOptions o;
      o.input = ck_input(a_ck);
      o.sequence = a_seq;
      o.layer = a_layer;
      if (a_kind) o.kind = attention_kind_from_string(*a_kind);
      o.sum_heads = a_sum;
      cmd_attn(o);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace mimo
