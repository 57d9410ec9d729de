#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mimo/data/sprites.hpp"
#include "mimo/json_util.hpp"
#include "mimo/model/config.hpp"
#include "mimo/training/trainer.hpp"

namespace mimo {

// Default generated data: enough sequences that 2000 steps of batch 16 see
// each one a few dozen times, long enough for a 4n-frame rollout.
inline SpriteWorldConfig default_run_sprites() {
  SpriteWorldConfig s;
  s.num_sequences = 1024;
  s.seq_len = 25;
  return s;
}

// Where training/eval sequences come from. An empty path means "generate
// them from `sprites`".
struct DataSection {
  std::string path;
  SpriteWorldConfig sprites = default_run_sprites();
  double train_frac = 0.8;
  std::uint64_t split_seed = 0;

  bool operator==(const DataSection&) const = default;
};

struct EvalSection {
  std::vector<double> csi_thresholds{0.3, 0.5};
  std::size_t horizon = 0;  // 0: the model's native n
  double max_val = 1.0;

  bool operator==(const EvalSection&) const = default;
};

/// Everything a run needs. Every field has a default, so `{}` is a valid
/// toy run. The training seed lives at the top level only.
struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  DataSection data{};
  TrainOptions train{};
  std::size_t checkpoint_every = 0;  // 0: only at the end
  EvalSection eval{};
  std::uint64_t seed = 0;
  std::string out = "run";

  bool operator==(const RunConfig&) const = default;
};

inline Json to_json(const RunConfig& c) {
  Json train = to_json(c.train);
  train.erase("seed");
  return Json{{"model", to_json(c.model)},
              {"data",
               {{"path", c.data.path},
                {"sprites", to_json(c.data.sprites)},
                {"train_frac", c.data.train_frac},
                {"split_seed", c.data.split_seed}}},
              {"train", std::move(train)},
              {"checkpoint_every", c.checkpoint_every},
              {"eval", {{"csi_thresholds", c.eval.csi_thresholds}, {"horizon", c.eval.horizon}, {"max_val", c.eval.max_val}}},
              {"seed", c.seed},
              {"out", c.out}};
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  JsonReader r(j, "config");
  if (const Json* m = r.child("model")) c.model = model_config_from_json(*m);
  if (const Json* d = r.child("data")) {
    JsonReader dr(*d, "data");
    dr.get("path", c.data.path).get("train_frac", c.data.train_frac).get("split_seed", c.data.split_seed);
    if (const Json* s = dr.child("sprites")) c.data.sprites = sprite_config_from_json(*s, default_run_sprites());
    dr.finish();
  }
  if (const Json* t = r.child("train")) {
    if (t->is_object() && t->contains("seed")) throw UsageError("train.seed: set the top-level 'seed' instead");
    JsonReader tr(*t, "train");
    read_train_options(tr, c.train);
    tr.finish();
  }
  r.get("checkpoint_every", c.checkpoint_every);
  if (const Json* e = r.child("eval")) {
    JsonReader er(*e, "eval");
    er.get("csi_thresholds", c.eval.csi_thresholds).get("horizon", c.eval.horizon).get("max_val", c.eval.max_val);
    er.finish();
  }
  r.get("seed", c.seed).get("out", c.out);
  r.finish();
  c.train.seed = c.seed;
  c.data.sprites.validate();
  if (!(c.data.train_frac > 0.0 && c.data.train_frac < 1.0)) throw UsageError("data.train_frac must be in (0, 1)");
  if (!(c.eval.max_val > 0.0)) throw UsageError("eval.max_val must be > 0");
  return c;
}

/// Content digest of everything that influences results. The output
/// directory is excluded so identical runs in different places match.
inline std::string config_hash(const RunConfig& c) {
  Json j = to_json(c);
  j.erase("out");
  return fnv1a_hex(j.dump());
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace mimo
