#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "mimo/data.hpp"
#include "mimo/training.hpp"
#include "test_util.hpp"

using namespace mimo;
using namespace mimo::testing;

namespace {

Dataset tiny_sprites(std::size_t count, std::size_t len, std::uint64_t seed = 0) {
  SpriteWorldConfig s;
  s.height = s.width = 8;
  s.sprite_size = 3;
  s.num_sprites = 1;
  s.seq_len = len;
  s.num_sequences = count;
  s.seed = seed;
  return generate_sprites(s);
}

Parameters scalar_param(double v) {
  Parameters p;
  p.add("x", Tensor({1}, {v}, true));
  return p;
}

}  // namespace

TEST(Loss, ReferenceValues) {
  Tensor target = Tensor::zeros({1, 1, 1, 2, 2});
  Tensor pred({1, 1, 1, 2, 2}, {0.5, 0, 0, 0});
  EXPECT_DOUBLE_EQ(prediction_loss({pred}, target, false).item(), 0.75);
  EXPECT_EQ(prediction_loss({target}, target, true).item(), 0.0);
  EXPECT_DOUBLE_EQ(prediction_loss({pred, pred, pred}, target, true).item(), 0.75);
  EXPECT_DOUBLE_EQ(prediction_loss({target, pred}, target, false).item(), 0.75);
  EXPECT_DOUBLE_EQ(prediction_loss({target, pred}, target, true).item(), 0.375);

  Tensor t2 = Tensor::zeros({2, 3, 1, 2, 2});
  Tensor p2 = Tensor::build({2, 3, 1, 2, 2}, fill::Constant{0.1});
  EXPECT_NEAR(prediction_loss({p2}, t2, false).item(), 4 * (0.01 + 0.1), 1e-12);
  EXPECT_NEAR(prediction_loss({p2}, t2, false, LossNorm::raw_sum).item(), 24 * (0.01 + 0.1), 1e-12);
  EXPECT_THROW(prediction_loss({}, t2, true), ShapeError);
  EXPECT_THROW(prediction_loss({pred}, t2, true), ShapeError);
}

TEST(Loss, PositiveUnlessExact) {
  Rng rng(1);
  Tensor t = Tensor::build({1, 2, 1, 3, 3}, fill::Uniform{0, 1}, &rng);
  Tensor p = t.clone();
  EXPECT_EQ(prediction_loss({p}, t, true).item(), 0.0);
  p.mutable_data()[4] += 1e-9;
  EXPECT_GT(prediction_loss({p}, t, true).item(), 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  Tensor t = Tensor::build({2, 2, 1, 3, 3}, fill::Uniform{0, 1}, &rng);
  Tensor p = Tensor::build({2, 2, 1, 3, 3}, fill::Uniform{0, 1}, &rng);
  p.set_requires_grad(true);
  auto f = [&](const Tensor& x) { return prediction_loss({x, scale(x, 0.5)}, t, true); };
  EXPECT_LT(grad_check(f, p).max_rel_error, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameters p = scalar_param(2.0);
  OptimState s;
  p.at("x").mutable_grad()[0] = 0.0;
  adam_step(p, s);
  EXPECT_EQ(p.at("x")[0], 2.0);
  EXPECT_EQ(s.step, 1u);
  EXPECT_FALSE(p.at("x").has_grad());
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameters p = scalar_param(0.0);
  OptimState s;
  p.at("x").mutable_grad()[0] = 1.0;
  adam_step(p, s);
  EXPECT_NEAR(p.at("x")[0], -5e-4, 1e-6);

  Parameters q;
  q.add("a", Tensor({2}, {1.0, -3.0}, true));
  q.add("b", Tensor({2}, {1.0, -3.0}, true));
  for (auto name : {"a", "b"}) {
    q.at(name).mutable_grad()[0] = 0.3;
    q.at(name).mutable_grad()[1] = -7.0;
  }
  OptimState s2;
  adam_step(q, s2);
  EXPECT_EQ(q.at("a")[0], q.at("b")[0]);
  EXPECT_EQ(q.at("a")[1], q.at("b")[1]);
}

TEST(Adam, MissingGradientIsAnError) {
  Parameters p = scalar_param(1.0);
  OptimState s;
  EXPECT_THROW(adam_step(p, s), Error);
}

TEST(Adam, ConvergesOnQuadratic) {
  // Adam moves at most ~lr per step, so the start sits 0.3 away; an
  // independent scalar Adam simulation ends 4.4646703658605395e-05 away.
  const double target = 0.7;
  Parameters p = scalar_param(1.0);
  OptimState s;
  for (int i = 0; i < 2000; ++i) {
    Tensor x = p.at("x");
    Tensor loss = reduce(add_scalar(x, -target), Reduction::sum_of_squares);
    backward(loss);
    adam_step(p, s);
  }
  EXPECT_LT(std::abs(p.at("x")[0] - target), 1e-3);
  EXPECT_NEAR(std::abs(p.at("x")[0] - target), 4.4646703658605395e-05, 1e-9);
}

TEST(Adam, GlobalNormClipping) {
  Parameters p;
  p.add("a", Tensor({2}, {0, 0}, true));
  p.add("b", Tensor({1}, {0}, true));
  p.at("a").mutable_grad()[0] = 3.0;
  p.at("b").mutable_grad()[0] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(p, 1.0), 5.0);
  EXPECT_NEAR(p.at("a").grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(p.at("b").grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(p, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(p.at("b").grad()[0], 0.8, 1e-15);
}

TEST(Plateau, CounterTrace) {
  PlateauScheduler s;
  double lr = 1.0;
  for (double loss : {5.0, 4.0, 3.0, 2.0, 1.0, 0.5}) lr = s.step(loss, lr);
  EXPECT_EQ(lr, 1.0);

  PlateauScheduler p;
  p.patience = 3;
  lr = p.step(1.0, 1.0);
  for (int i = 0; i < 4; ++i) lr = p.step(1.0, lr);
  EXPECT_EQ(lr, 0.5);
  EXPECT_EQ(p.reductions, 1u);

  PlateauScheduler floor;
  floor.patience = 1;
  floor.min_lr = 0.3;
  lr = 1.0;
  for (int i = 0; i < 10; ++i) lr = floor.step(1.0, lr);
  EXPECT_EQ(lr, 0.3);
  EXPECT_THROW(floor.step(std::nan(""), lr), NumericError);
  EXPECT_EQ(scheduler_from_json(to_json(p)).best, p.best);
  EXPECT_EQ(scheduler_from_json(to_json(PlateauScheduler{})).best, PlateauScheduler{}.best);
}

TEST(Train, ZeroStepsKeepsInitialisation) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.steps = 0;
  TrainState s = init_train_state(c, o);
  Parameters before = s.params.clone();
  train(c, o, tiny_sprites(8, 7), s);
  EXPECT_TRUE(s.history.empty());
  for (const auto& [name, t] : before) EXPECT_TRUE(same_bits(t, s.params.at(name))) << name;
}

TEST(Train, DeterministicHistories) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.steps = 6;
  o.batch_size = 4;
  o.seed = 3;
  Dataset d = tiny_sprites(8, 7);
  TrainState a = init_train_state(c, o), b = init_train_state(c, o);
  train(c, o, d, a);
  train(c, o, d, b);
  EXPECT_EQ(a.history, b.history);
  for (const auto& [name, t] : a.params) EXPECT_TRUE(same_bits(t, b.params.at(name)));
  std::ostringstream csv;
  write_loss_csv(csv, a.history, "h");
  EXPECT_EQ(csv.str().substr(0, 27), "# config_hash h\nstep,loss,l");
}

TEST(Train, RejectsMismatchedData) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.steps = 1;
  TrainState s = init_train_state(c, o);
  EXPECT_THROW(train(c, o, tiny_sprites(4, 5), s), UsageError);  // needs m + n = 7 frames
  SpriteWorldConfig big;
  big.seq_len = 7;
  big.num_sequences = 2;
  EXPECT_THROW(train(c, o, generate_sprites(big), s), UsageError);
}

TEST(Train, NanAbortCarriesDiagnostic) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.steps = 1;
  TrainState s = init_train_state(c, o);
  s.params.at("head.conv.bias").mutable_data()[0] = std::nan("");
  try {
    train(c, o, tiny_sprites(4, 7), s);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter head.conv.bias"), std::string::npos) << e.what();
  }
  EXPECT_EQ(Tape::current().size(), 0u);
}

TEST(Checkpoint, RoundTripReproducesForward) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.steps = 2;
  o.batch_size = 2;
  Dataset d = tiny_sprites(4, 7);
  Checkpoint ck{Json{{"note", "probe"}}, "cafe", c, init_train_state(c, o)};
  train(c, o, d, ck.state);
  std::stringstream buf;
  save_checkpoint(ck, buf);
  Checkpoint back = load_checkpoint(buf);
  EXPECT_EQ(back.model, c);
  EXPECT_EQ(back.config_hash, "cafe");
  EXPECT_EQ(back.run_config, ck.run_config);
  EXPECT_EQ(back.state.step, 2u);
  EXPECT_EQ(back.state.history, ck.state.history);
  EXPECT_EQ(back.state.params.scalar_count(), parameter_count(c));
  EXPECT_EQ(back.state.optim.m.size(), ck.state.params.size());

  round_to_storage(ck.state.params);
  Tensor probe = random_frames(2, 3, c, 1);
  NoGradGuard g;
  EXPECT_TRUE(same_bits(model_forward(probe, back.state.params, c).prediction,
                        model_forward(probe, ck.state.params, c).prediction));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  ModelConfig c = tiny_config();
  Checkpoint ck{Json::object(), "", c, init_train_state(c, {})};
  std::stringstream buf;
  save_checkpoint(ck, buf);
  const std::string bytes = buf.str();
  std::istringstream short_payload(bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(load_checkpoint(short_payload), FormatError);
  std::istringstream long_payload(bytes + "xxxx");
  EXPECT_THROW(load_checkpoint(long_payload), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream bad_magic(bad);
  EXPECT_THROW(load_checkpoint(bad_magic), FormatError);
  bad = bytes;
  bad[4] = 9;
  std::istringstream bad_version(bad);
  EXPECT_THROW(load_checkpoint(bad_version), FormatError);
  EXPECT_THROW(load_checkpoint(std::string("/nonexistent.mvpc")), FormatError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  ModelConfig c = tiny_config();
  TrainOptions o;
  o.batch_size = 2;
  o.seed = 4;
  Dataset d = tiny_sprites(8, 7);  // 4 steps per epoch
  for (std::size_t cut : {3u, 4u}) {
    // Reference: stop at `cut`, round to storage precision in memory, go on.
    TrainOptions first = o;
    first.steps = cut;
    TrainState ref = init_train_state(c, o);
    train(c, first, d, ref);
    Checkpoint ck{Json::object(), "", c, ref};
    std::stringstream buf;
    save_checkpoint(ck, buf);
    round_to_storage(ref.params);
    for (auto* moments : {&ref.optim.m, &ref.optim.v})
      for (auto& [_, v] : *moments)
        for (double& x : v) x = static_cast<float>(x);

    TrainOptions rest = o;
    rest.steps = 9;
    train(c, rest, d, ref);
    Checkpoint back = load_checkpoint(buf);
    train(c, rest, d, back.state);
    ASSERT_EQ(back.state.history.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(back.state.history[i].step, i + 1);
    EXPECT_EQ(back.state.history, ref.history) << "cut " << cut;
  }
}

TEST(Train, ToySpritesLossTrendsDown) {
  // Median of 5-step windows over 200 steps: early windows above late ones.
  ModelConfig c = ModelConfig::toy();
  SpriteWorldConfig sc;
  sc.num_sequences = 512;
  Dataset d = generate_sprites(sc);
  int decreasing = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainOptions o;
    o.steps = 200;
    o.seed = seed;
    TrainState s = init_train_state(c, o);
    train(c, o, d, s);
    std::vector<double> medians;
    for (std::size_t w = 0; w + 5 <= s.history.size(); w += 5) {
      std::vector<double> v;
      for (std::size_t i = w; i < w + 5; ++i) v.push_back(s.history[i].loss);
      std::nth_element(v.begin(), v.begin() + 2, v.end());
      medians.push_back(v[2]);
    }
    // Quarter means of the window medians must strictly decrease.
    const std::size_t q = medians.size() / 4;
    std::vector<double> quarter(4, 0.0);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = k * q; i < (k + 1) * q; ++i) quarter[k] += medians[i] / static_cast<double>(q);
    const bool ok = quarter[0] > quarter[1] && quarter[1] > quarter[2] && quarter[2] > quarter[3];
    decreasing += ok;
    std::printf("seed %llu quarter means %.3f %.3f %.3f %.3f\n", static_cast<unsigned long long>(seed), quarter[0],
                quarter[1], quarter[2], quarter[3]);
  }
  EXPECT_EQ(decreasing, 3);
}
