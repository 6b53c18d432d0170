#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chanprune/errors.hpp"
#include "experiment.hpp"

using namespace chanprune;
using chanprune::cli::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("chanprune_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_run(const fs::path& out) {
  ExperimentConfig c;
  c.preset = "mlp";
  c.data.synthetic.n = 60;
  c.data.synthetic.image_size = 8;
  c.data.synthetic.grid = 2;
  c.data.synthetic_test = 20;
  c.score_batch = 20;
  c.seeds = {0, 1};
  c.out = out.string();
  return c;
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("config round trip keeps every field") {
    ExperimentConfig c;
    c.preset = "small-cnn";
    c.criterion = "3sp-ca";
    c.flop_target = 0.6;
    c.lambda = 3.5;
    c.init = InitPolicy::Rescale;
    c.keep_at_least_one = false;
    c.seeds = {4, 7};
    c.data.synthetic.margin = 0.3;
    c.train.epochs = 7;
    c.train.milestones = {3};
    c.active.budget_seconds = 12.0;
    const auto j = c.to_json();
    CHECK(ExperimentConfig::from_json(j).to_json() == j);
  }

  TEST_CASE("partial configs keep defaults") {
    const auto c = ExperimentConfig::from_json(nlohmann::json{{"criterion", "uniform"}, {"train", {{"epochs", 3}}}});
    CHECK(c.criterion == "uniform");
    CHECK(c.train.epochs == 3);
    CHECK(c.train.batch_size == TrainConfig{}.batch_size);
    CHECK(c.preset == "tiny-vgg");
  }

  TEST_CASE("bad configs are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"ratoi", 0.5}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"data", {{"pth", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"width", "wide"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::array()), ConfigError);
    ExperimentConfig c;
    c.ratio = 0.5;
    c.flop_target = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.flop_target.reset();
    c.criterion = "magnitude";
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("resolved config loads back") {
    const auto dir = scratch("resolved");
    auto c = small_run(dir);
    cli::cmd_flops(c);
    std::ifstream is(dir / "resolved_config.json");
    const auto j = nlohmann::json::parse(is);
    CHECK(j.at("command") == "flops");
    CHECK(ExperimentConfig::from_json(j).to_json() == c.to_json());
    fs::remove_all(dir);
  }

  TEST_CASE("prune writes per-seed artifacts and an aggregate") {
    const auto dir = scratch("prune");
    auto c = small_run(dir);
    c.ratio = 0.5;
    const auto results = cli::cmd_prune(c);
    REQUIRE(results.size() == 2);
    for (const auto& r : results) {
      CHECK(r.ok);
      const auto seed_dir = dir / ("seed_" + std::to_string(r.seed));
      for (const char* f : {"prune_report.json", "kept_bitmap.json", "scores.csv", "flop_audit.csv", "model.json",
                            "model.bin"}) {
        CHECK_MESSAGE(fs::exists(seed_dir / f), f);
      }
    }
    std::ifstream is(dir / "aggregate.json");
    const auto agg = nlohmann::json::parse(is);
    CHECK(agg.at("completed") == 2);
    CHECK(agg.at("metrics").at("flop_reduction").at("n") == 2);
    fs::remove_all(dir);
  }

  TEST_CASE("a failing seed is recorded, others still run") {
    const auto dir = scratch("eval");
    auto c = small_run(dir);
    c.ratio = 0.5;
    c.seeds = {0};
    cli::cmd_prune(c);
    c.checkpoint = (dir / "seed_{seed}" / "model").string();
    c.seeds = {0, 1};
    c.out = (dir / "eval").string();
    const auto results = cli::cmd_eval(c);
    REQUIRE(results.size() == 2);
    CHECK(results[0].ok);
    CHECK_FALSE(results[1].ok);
    std::ifstream is(dir / "eval" / "aggregate.json");
    const auto agg = nlohmann::json::parse(is);
    CHECK(agg.at("failed_seeds") == nlohmann::json::array({1}));
    fs::remove_all(dir);
  }

  TEST_CASE("aggregate statistics") {
    std::vector<cli::SeedResult> rs(3);
    const double v[] = {1.0, 2.0, 3.0};
    for (int i = 0; i < 3; ++i) {
      rs[i].seed = i;
      rs[i].ok = true;
      rs[i].values = {{"acc", v[i]}, {"label", "x"}};
    }
    const auto agg = cli::aggregate_results(rs);
    CHECK(agg.at("metrics").at("acc").at("mean").get<double>() == doctest::Approx(2.0));
    CHECK(agg.at("metrics").at("acc").at("sd").get<double>() == doctest::Approx(1.0));
    CHECK(agg.at("metrics").at("acc").at("se").get<double>() == doctest::Approx(1.0 / std::sqrt(3.0)));
    CHECK_FALSE(agg.at("metrics").contains("label"));
  }
}
