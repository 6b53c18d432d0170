#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "chanprune/scoring.hpp"
#include "chanprune/trainer.hpp"
#include "helpers.hpp"

using namespace chanprune;

namespace {

DatasetPair separable(std::size_t n, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.classes = 2;
  cfg.n = n;
  cfg.seed = seed;
  cfg.channels = 1;
  cfg.image_size = 8;
  cfg.margin = 3.0;
  return synthetic_pair(cfg, n);
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.milestones = {};
  c.batch_size = 32;
  c.lr = 0.05;
  c.augment = false;
  c.seed = 1;
  return c;
}

std::vector<float> all_params(const ModelGraph<float>& m) {
  std::vector<float> out;
  for (const auto& p : m.params())
    for (const auto* t : {&p.weight, &p.bias, &p.gamma, &p.beta}) out.insert(out.end(), t->data().begin(), t->data().end());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("mlp fits separable data") {
    const auto data = separable(400, 3);
    auto m = build_preset<float>("mlp", 2, 0.5, data.train.shape());
    he_init(m, 1);
    const auto metrics = train(m, data.train, quick(50));
    CHECK(evaluate(m, data.train) > 0.99);
    CHECK(metrics.epochs.size() == 50);
    CHECK(metrics.epochs.back().train_loss < metrics.epochs.front().train_loss);
    CHECK(metrics.steps == 50 * 13);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto data = separable(64, 4);
    SyntheticConfig cfg;
    auto m = build_small_cnn<float>(2, 1, 8, 4);
    he_init(m, 2);
    const auto before = all_params(m);
    auto cfg0 = quick(3);
    cfg0.lr = 0.0;
    cfg0.augment = true;
    train(m, data.train, cfg0);
    CHECK(all_params(m) == before);
  }

  TEST_CASE("same seed gives bit-identical parameters") {
    const auto data = separable(96, 5);
    auto a = build_small_cnn<float>(2, 1, 8, 4);
    he_init(a, 3);
    auto b = a;
    auto c = a;
    auto cfg = quick(2);
    cfg.augment = true;
    const auto ma = train(a, data.train, cfg);
    const auto mb = train(b, data.train, cfg);
    CHECK(all_params(a) == all_params(b));
    CHECK(ma.epochs.back().train_loss == mb.epochs.back().train_loss);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].running_mean == b.params()[i].running_mean);
    cfg.seed = 2;
    train(c, data.train, cfg);
    CHECK(all_params(a) != all_params(c));
  }

  TEST_CASE("first step follows the sgd update rule") {
    const auto data = separable(16, 6);
    auto m = build_preset<double>("mlp", 2, 0.25, data.train.shape());
    he_init(m, 4);
    const auto w0 = flat_weights(m);
    std::vector<std::size_t> all(16);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto g0 = weight_gradient(m, make_batch<double>(data.train, all));
    auto cfg = quick(1);
    cfg.batch_size = 16;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    train(m, data.train, cfg);
    const auto w1 = flat_weights(m);
    for (std::size_t i = 0; i < w0.size(); ++i)
      CHECK(w1[i] == doctest::Approx(w0[i] - 0.1 * (g0[i] + 0.01 * w0[i])).epsilon(1e-9));
  }

  TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.epochs = 20;
    c.lr = 0.1;
    CHECK(lr_at(c, 0) == 0.1);
    CHECK(lr_at(c, 9) == 0.1);
    CHECK(lr_at(c, 10) == 0.05);
    CHECK(lr_at(c, 14) == 0.05);
    CHECK(lr_at(c, 15) == 0.025);
    CHECK(lr_at(c, 19) == 0.025);

    TrainConfig bad = c;
    bad.milestones = {15, 10};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.milestones = {10, 25};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.lr = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.precision = "float16";
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const auto round = TrainConfig::from_json(c.to_json());
    CHECK(round.to_json() == c.to_json());
    CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"epochs", "many"}}), ConfigError);
  }

  TEST_CASE("constant logits score the class-zero share") {
    SyntheticConfig cfg;
    cfg.n = 100;
    auto data = synthetic(cfg, 1);
    auto m = build_preset<float>("mlp", 10, 1.0, data.shape());
    for (auto& p : m.params()) {
      std::fill(p.weight.data().begin(), p.weight.data().end(), 0.0f);
      std::fill(p.bias.data().begin(), p.bias.data().end(), 0.0f);
    }
    CHECK(evaluate(m, data) == 0.1);
    Dataset empty;
    CHECK_THROWS_AS(evaluate(m, empty), ConfigError);
  }

  TEST_CASE("divergence is reported with the epoch") {
    const auto data = separable(64, 7);
    auto m = build_preset<float>("mlp", 2, 0.5, data.train.shape());
    he_init(m, 1);
    auto cfg = quick(3);
    cfg.lr = 1e30;
    cfg.momentum = 0.0;
    try {
      train(m, data.train, cfg);
      FAIL("expected divergence");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("weight masks hold pruned weights at zero") {
    const auto data = separable(64, 8);
    auto m = build_preset<float>("mlp", 2, 0.5, data.train.shape());
    he_init(m, 1);
    WeightMasks masks;
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
      if (!m.layer(i).has_weights()) continue;
      std::vector<std::uint8_t> k(m.params()[i].weight.size());
      for (std::size_t j = 0; j < k.size(); ++j) k[j] = j % 3 != 0;
      masks.push_back(std::move(k));
    }
    TrainHooks hooks;
    hooks.weight_masks = &masks;
    train(m, data.train, quick(2), hooks);
    std::size_t slot = 0;
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
      if (!m.layer(i).has_weights()) continue;
      for (std::size_t j = 0; j < masks[slot].size(); ++j)
        if (!masks[slot][j]) CHECK(m.params()[i].weight[j] == 0.0f);
      ++slot;
    }
  }

  TEST_CASE("metrics and test evaluation") {
    const auto data = separable(64, 9);
    auto m = build_preset<float>("mlp", 2, 0.5, data.train.shape());
    he_init(m, 1);
    TrainHooks hooks;
    hooks.test = &data.test;
    const auto metrics = train(m, data.train, quick(2), hooks);
    REQUIRE(metrics.final_accuracy.has_value());
    CHECK(*metrics.final_accuracy == evaluate(m, data.test));
    CHECK(metrics.momentum == 0.9);
    CHECK(metrics.weight_decay == 5e-4);
    std::ostringstream os;
    write_metrics_csv(os, metrics);
    const auto csv = os.str();
    CHECK(csv.rfind("epoch,train_loss,test_acc,epoch_seconds\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto j = metrics.to_json();
    CHECK(j["epochs"].size() == 2);
  }

  TEST_CASE("epoch timing") {
    const auto data = separable(64, 10);
    auto m = build_preset<float>("mlp", 2, 0.5, data.train.shape());
    he_init(m, 1);
    const auto before = all_params(m);
    CHECK(time_epoch(m, data.train, quick(1), 1, 2) > 0.0);
    CHECK(all_params(m) == before);
    CHECK_THROWS_AS(time_epoch(m, data.train, quick(1), 1, 0), ConfigError);
    const auto batch = testutil::random_batch<float>(data.train.shape(), 8, 2, 1);
    CHECK(time_train_step(m, batch, 3) > 0.0);
  }

  TEST_CASE("aggregate") {
    const std::vector<double> v = {1, 2, 3, 4};
    const auto a = aggregate(v);
    CHECK(a.n == 4);
    CHECK(a.mean == 2.5);
    CHECK(a.sd == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(a.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-12));
    const std::vector<double> one = {0.7};
    CHECK(aggregate(one).se == 0.0);
  }
}
