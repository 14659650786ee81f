// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "televit/checkpoint.hpp"
#include "televit/errors.hpp"
#include "televit/grad_check.hpp"
#include "televit/training.hpp"

using namespace televit;

namespace {

Tensor logits_of(std::vector<double> values, std::size_t b, std::size_t h, std::size_t w) {
  return Tensor({b, 2, h, w}, std::move(values), true);
}

double softplus(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST(Loss, ZeroLogitsGiveLn2) {
  const Tensor target({2, 1, 3, 3}, {1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 0, 1, 0});
  EXPECT_NEAR(cross_entropy_loss(Tensor({2, 2, 3, 3}), target).item(), std::log(2.0), 1e-12);
}

TEST(Loss, LargeCorrectMarginIsNearZero) {
  // pixel 0 burned, pixel 1 not: margin 20 toward the right class in each
  const Tensor loss = cross_entropy_loss(logits_of({-10, 10, 10, -10}, 1, 1, 2), Tensor({1, 1, 1, 2}, {1, 0}));
  EXPECT_LT(loss.item(), 1e-8);
  EXPECT_GE(loss.item(), 0.0);
}

TEST(Loss, TwoPixelHandValue) {
  // pixel logits (0,1) and (0,-1), targets 1 and 0; class planes are stored first
  const Tensor loss = cross_entropy_loss(logits_of({0, 0, 1, -1}, 1, 1, 2), Tensor({1, 1, 1, 2}, {1, 0}));
  EXPECT_NEAR(loss.item(), softplus(-1.0), 1e-12);
  EXPECT_NEAR(loss.item(), 0.313262, 1e-6);
  const Tensor flipped = cross_entropy_loss(logits_of({0, 0, 1, -1}, 1, 1, 2), Tensor({1, 1, 1, 2}, {0, 1}));
  EXPECT_NEAR(flipped.item(), softplus(1.0), 1e-12);
}

TEST(Loss, MatchesPerPixelOracle) {
  Rng rng(5);
  const std::size_t b = 3, h = 2, w = 4;
  std::vector<double> z(b * 2 * h * w), y(b * h * w);
  for (auto& v : z) v = rng.normal(0.0, 3.0);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  long double total = 0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t p = 0; p < h * w; ++p) {
      const long double z0 = z[(n * 2 + 0) * h * w + p], z1 = z[(n * 2 + 1) * h * w + p];
      const long double zy = y[n * h * w + p] == 1.0 ? z1 : z0;
      const long double m = std::max(z0, z1);
      total += m + std::log(std::exp(z0 - m) + std::exp(z1 - m)) - zy;
    }
  const double loss = cross_entropy_loss(logits_of(z, b, h, w), Tensor({b, 1, h, w}, y)).item();
  EXPECT_NEAR(loss, static_cast<double>(total / (b * h * w)), 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  std::vector<double> z(2 * 2 * 3 * 3);
  for (auto& v : z) v = rng.normal();
  const Tensor target({2, 1, 3, 3}, {1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0, 1});
  const double err = grad_check([&](const Tensor& x) { return cross_entropy_loss(x, target); },
                                Tensor({2, 2, 3, 3}, z));
  EXPECT_LT(err, 1e-6);
}

TEST(Loss, RejectsBadInputs) {
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 2, 1, 2}), Tensor({1, 1, 1, 2}, {1, 0.5})), ContractError);
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 2, 1, 2}), Tensor({1, 1, 2, 1}, {1, 0})), DimensionError);
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 3, 1, 2}), Tensor({1, 1, 1, 2})), DimensionError);
  EXPECT_THROW(sample_loss(Tensor({2, 2}), Tensor({1, 2})), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  p.mutable_grad();
  const std::vector<NamedParam> params{{"p", p}};
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(params, state, 0.1, 0.0);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{1.0, -2.0, 0.5}));
  // a missing gradient counts as zero too
  Tensor q({2}, {3.0, 4.0}, true);
  AdamState s2;
  adam_step(std::vector<NamedParam>{{"q", q}}, s2, 0.1, 0.0);
  EXPECT_EQ(q.at(0), 3.0);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  Tensor p({4}, {0, 0, 0, 0}, true);
  auto g = p.mutable_grad();
  const double grads[] = {3.0, -0.01, 250.0, -1.0};
  for (int i = 0; i < 4; ++i) g[i] = grads[i];
  AdamState state;
  adam_step(std::vector<NamedParam>{{"p", p}}, state, 1e-3, 0.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p.at(i), -1e-3 * (grads[i] > 0 ? 1 : -1), 1e-9) << i;
}

TEST(Adam, TenStepsOnParabolaMatchHandRolledOracle) {
  for (const double wd : {0.0, 0.01}) {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Tensor x({1}, std::vector<double>{1.0}, true);
    const std::vector<NamedParam> params{{"x", x}};
    AdamState state;
    double ox = 1.0, m = 0, v = 0;
    for (int t = 1; t <= 10; ++t) {
      x.zero_grad();
      backward(sum(mul(x, x)));
      adam_step(params, state, lr, wd);
      const double g = 2.0 * ox + wd * ox;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      ox -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      ASSERT_NEAR(x.at(0), ox, 1e-12) << "step " << t << " wd " << wd;
    }
    EXPECT_EQ(state.step, 10u);
    EXPECT_LT(x.at(0), 1.0);
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor p({2}, {0, 0}, true);
  p.mutable_grad()[1] = NAN;
  AdamState state;
  try {
    adam_step(std::vector<NamedParam>{{"block0.qkv_weight", p}}, state, 1e-3, 0.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("block0.qkv_weight"), std::string::npos);
  }
}

TEST(Plateau, ImprovingLossNeverReduces) {
  std::vector<double> losses;
  for (int i = 0; i < 30; ++i) losses.push_back(1.0 / (i + 1));
  EXPECT_EQ(reduce_on_plateau(losses, 1e-4, 0.5, 5), 1e-4);
}

TEST(Plateau, FlatLossHalvesAfterPatience) {
  ReduceLROnPlateau s(1e-4, 0.5, 5);
  // epoch 1 sets the best, epochs 2..6 are the five non-improving ones
  for (int epoch = 1; epoch <= 5; ++epoch) EXPECT_EQ(s.step(1.0), 1e-4) << epoch;
  EXPECT_EQ(s.step(1.0), 5e-5);
  // the counter restarts after a reduction
  for (int epoch = 7; epoch <= 10; ++epoch) EXPECT_EQ(s.step(1.0), 5e-5) << epoch;
  EXPECT_EQ(s.step(1.0), 2.5e-5);
  EXPECT_EQ(reduce_on_plateau(std::vector<double>(6, 1.0), 1e-4, 0.5, 5), 5e-5);
  EXPECT_EQ(reduce_on_plateau(std::vector<double>(5, 1.0), 1e-4, 0.5, 5), 1e-4);
}

TEST(Plateau, ImprovementResetsCounter) {
  const std::vector<double> losses{1.0, 1.0, 1.0, 1.0, 1.0, 0.9, 0.9, 0.9, 0.9, 0.9};
  EXPECT_EQ(reduce_on_plateau(losses, 1.0, 0.5, 5), 1.0);
  EXPECT_EQ(reduce_on_plateau(std::vector<double>(100, 2.0), 1.0, 0.5, 1, 0.1), 0.1);
}

TEST(Plateau, RejectsBadSettings) {
  EXPECT_THROW(ReduceLROnPlateau(1.0, 1.0, 5), ConfigError);
  EXPECT_THROW(ReduceLROnPlateau(1.0, 0.0, 5), ConfigError);
  EXPECT_THROW(ReduceLROnPlateau(1.0, 0.5, 0), ConfigError);
}

TEST(TrainConfigTest, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.epochs = 7;
  c.lr = 3e-4;
  c.variant = Variant::with_global;
  c.adam.beta2 = 0.99;
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.variant, Variant::with_global);

  TrainConfig partial = nlohmann::json{{"lr", 0.01}}.get<TrainConfig>();
  EXPECT_EQ(partial.lr, 0.01);
  EXPECT_EQ(partial.epochs, TrainConfig{}.epochs);
  EXPECT_THROW(nlohmann::json({{"variant", "bogus"}}).get<TrainConfig>(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"epochs", "ten"}}).get<TrainConfig>(), ConfigError);

  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.lr = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Train, DeterministicPerSeed) {
  const auto d = fixtures::tiny_data(Variant::with_indices, 3);
  TrainConfig tc;
  tc.variant = Variant::with_indices;
  tc.epochs = 2;
  tc.max_steps = 6;
  tc.lr = 1e-3;
  tc.seed = 9;
  std::vector<Sample> tr(d.sets.train.begin(), d.sets.train.begin() + 24);
  std::vector<Sample> val(d.sets.val.begin(), d.sets.val.begin() + 8);
  const auto a = train(TeleViTModel(d.config, 1), tr, val, tc);
  const auto b = train(TeleViTModel(d.config, 1), tr, val, tc);
  EXPECT_EQ(history_json(a.history), history_json(b.history));
  const auto pa = a.last.parameters(), pb = b.last.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    ASSERT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()))
        << pa[i].name;
  tc.seed = 10;
  const auto c = train(TeleViTModel(d.config, 1), tr, val, tc);
  EXPECT_NE(history_json(a.history), history_json(c.history));
  EXPECT_EQ(a.history.epochs.back().steps, 6u);
}

TEST(Train, CheckpointReloadReproducesValidationLoss) {
  const auto d = fixtures::tiny_data(Variant::local_only, 4);
  const auto dir = fixtures::fresh_dir("reload");
  TrainConfig tc;
  tc.variant = Variant::local_only;
  tc.epochs = 3;
  tc.lr = 1e-3;
  tc.batch_size = 8;
  std::vector<Sample> tr(d.sets.train.begin(), d.sets.train.begin() + 32);
  TrainOptions opts;
  opts.run_dir = dir;
  opts.checkpoint_extra = {{"note", "unit"}};
  const auto res = train(TeleViTModel(d.config, 2), tr, d.sets.val, tc, opts);
  for (const char* f : {"config.json", "history.json", "best.ckpt", "last.ckpt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto best = res.history.epochs.at(res.history.best_epoch - 1);
  const LoadedCheckpoint ck = load_checkpoint(dir / "best.ckpt");
  EXPECT_EQ(evaluate_loss(ck.model, d.sets.val), best.val_loss);
  EXPECT_EQ(ck.header["epoch"], res.history.best_epoch);
  EXPECT_EQ(ck.header["note"], "unit");
  EXPECT_EQ(ck.header["train_config"]["lr"], 1e-3);
  for (const auto& e : res.history.epochs) EXPECT_GE(e.val_loss, best.val_loss);
  std::ifstream in(dir / "history.json");
  EXPECT_EQ(nlohmann::json::parse(in), history_json(res.history));
}

TEST(Train, LossFallsOnASmallSet) {
  const auto d = fixtures::tiny_data(Variant::local_only, 5);
  std::vector<Sample> few(d.sets.train.begin(), d.sets.train.begin() + 4);
  TrainConfig tc;
  tc.variant = Variant::local_only;
  tc.epochs = 60;
  tc.lr = 1e-3;
  tc.batch_size = 4;
  const TeleViTModel init(d.config, 3);
  const double before = evaluate_loss(init, few);
  const auto res = train(init, few, {}, tc);
  EXPECT_LT(evaluate_loss(res.last, few), 0.5 * before);
}

TEST(Train, LossFallsOverFiftyStepsForEveryVariant) {
  for (const Variant v : {Variant::local_only, Variant::with_indices, Variant::with_global,
                          Variant::with_indices_and_global})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto d = fixtures::tiny_data(v, 20 + seed);
      std::vector<Sample> few(d.sets.train.begin(), d.sets.train.begin() + 4);
      TrainConfig tc;
      tc.variant = v;
      tc.epochs = 50;
      tc.lr = 1e-3;
      tc.batch_size = 4;
      tc.seed = seed;
      std::vector<double> losses;
      TrainOptions opts;
      opts.on_step = [&](std::size_t, double loss) { losses.push_back(loss); };
      train(TeleViTModel(d.config, seed), few, {}, tc, opts);
      ASSERT_EQ(losses.size(), 50u);
      EXPECT_LT(losses.back(), losses.front()) << to_string(v) << " seed " << seed;
    }
}

TEST(Train, RejectsMismatchesAndReportsDivergence) {
  auto d = fixtures::tiny_data(Variant::local_only, 6);
  std::vector<Sample> few(d.sets.train.begin(), d.sets.train.begin() + 2);
  TrainConfig tc;
  tc.variant = Variant::with_global;
  tc.epochs = 1;
  EXPECT_THROW(train(TeleViTModel(d.config, 0), few, {}, tc), ConfigError);
  tc.variant = Variant::local_only;
  tc.horizon = 2;
  EXPECT_THROW(train(TeleViTModel(d.config, 0), few, {}, tc), DataError);
  tc.horizon = 1;
  EXPECT_THROW(train(TeleViTModel(d.config, 0), {}, {}, tc), DataError);
  few[1].x_l.mutable_data()[0] = NAN;
  EXPECT_THROW(train(TeleViTModel(d.config, 0), few, {}, tc), DivergenceError);
}
