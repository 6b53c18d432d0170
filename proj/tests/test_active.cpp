#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "chanprune/active.hpp"

using namespace chanprune;

namespace {

DatasetPair small_pool() {
  SyntheticConfig cfg;
  cfg.classes = 4;
  cfg.n = 200;
  cfg.channels = 1;
  cfg.image_size = 8;
  cfg.seed = 3;
  return synthetic_pair(cfg, 40);
}

AcquisitionConfig small_config(double budget) {
  AcquisitionConfig c;
  c.budget_seconds = budget;
  c.per_step = 10;
  c.initial_per_class = 5;
  c.round_train.epochs = 1;
  c.round_train.milestones = {};
  c.round_train.batch_size = 16;
  c.round_train.augment = false;
  c.seed = 1;
  return c;
}

ModelFactory<float> mlp_factory(const ActivationShape& shape) {
  return [shape](const Dataset&) {
    auto m = build_preset<float>("mlp", 4, 0.25, shape);
    he_init(m, 1);
    return m;
  };
}

}  // namespace

TEST_SUITE("active") {
  TEST_CASE("entropy") {
    const std::vector<double> uniform(10, 0.1);
    CHECK(entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
    const std::vector<double> onehot = {0, 1, 0};
    CHECK(entropy(onehot) == 0.0);
    const std::vector<double> p = {0.2, 0.5, 0.3}, q = {0.5, 0.3, 0.2};
    CHECK(entropy(p) == doctest::Approx(entropy(q)).epsilon(1e-15));
  }

  TEST_CASE("top-k ties go to the lower position") {
    const std::vector<double> s = {0.5, 0.9, 0.5, 0.9, 0.1};
    CHECK(top_k(s, 3) == std::vector<std::size_t>{1, 3, 0});
    CHECK(top_k(s, 10).size() == 5);
    CHECK(top_k(s, 0).empty());
  }

  TEST_CASE("entropy scores come from model predictions") {
    const auto data = small_pool();
    auto m = mlp_factory(data.train.shape())(data.train);
    for (auto& p : m.params()) std::fill(p.weight.data().begin(), p.weight.data().end(), 0.0f);
    const std::vector<std::size_t> idx = {0, 3, 7};
    for (double h : entropy_scores(m, data.train, idx)) CHECK(h == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  }

  TEST_CASE("a tiny budget allows no acquisition") {
    const auto data = small_pool();
    const auto s = acquisition_loop<float>(mlp_factory(data.train.shape()), data.train, data.test, small_config(1e-9));
    CHECK(s.acquisitions == 0);
    CHECK(s.trace.size() == 1);
    CHECK(s.labeled.size() == 20);
    CHECK(s.final_accuracy(1e-9) == s.trace.front().test_accuracy);
    std::vector<int> per(4, 0);
    for (std::size_t i : s.labeled) ++per[std::size_t(data.train.labels[i])];
    for (int c : per) CHECK(c == 5);
  }

  TEST_CASE("labeled and pool stay a partition without duplicates") {
    const auto data = small_pool();
    const auto s = acquisition_loop<float>(mlp_factory(data.train.shape()), data.train, data.test, small_config(0.5));
    CHECK(s.acquisitions >= 1);
    std::set<std::size_t> all(s.labeled.begin(), s.labeled.end());
    CHECK(all.size() == s.labeled.size());
    for (std::size_t i : s.pool) CHECK(all.insert(i).second);
    CHECK(all.size() == data.train.size());
    CHECK(s.trace.front().labeled == 20);
    for (std::size_t r = 1; r < s.trace.size(); ++r) {
      CHECK(s.trace[r].labeled == s.trace[r - 1].labeled + 10);
      CHECK(s.trace[r].wall_seconds >= s.trace[r - 1].wall_seconds);
    }
    std::ostringstream os;
    write_trace_csv(os, "full", s);
    CHECK(os.str().rfind("variant,round,wall_seconds,labeled_count,test_accuracy\n", 0) == 0);
  }

  TEST_CASE("pool exhaustion stops the loop") {
    const auto data = small_pool();
    auto cfg = small_config(1e9);
    cfg.per_step = 100;
    const auto s = acquisition_loop<float>(mlp_factory(data.train.shape()), data.train, data.test, cfg);
    CHECK(s.pool_exhausted);
    CHECK(s.pool.empty());
    CHECK(s.labeled.size() == data.train.size());
  }

  TEST_CASE("final accuracy uses the last point inside the budget") {
    AcquisitionState s;
    s.trace = {{0, 1.0, 10, 0.3}, {1, 2.0, 20, 0.5}, {2, 3.5, 30, 0.7}};
    CHECK(s.final_accuracy(3.0) == 0.5);
    CHECK(s.final_accuracy(10.0) == 0.7);
    CHECK(s.final_accuracy(0.5) == 0.3);
  }

  TEST_CASE("invalid configuration") {
    const auto data = small_pool();
    auto cfg = small_config(0.0);
    CHECK_THROWS_AS(acquisition_loop<float>(mlp_factory(data.train.shape()), data.train, data.test, cfg), ConfigError);
    cfg = small_config(1.0);
    cfg.per_step = 0;
    CHECK_THROWS_AS(acquisition_loop<float>(mlp_factory(data.train.shape()), data.train, data.test, cfg), ConfigError);
  }
}
