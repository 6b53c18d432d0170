#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "chanprune/compute.hpp"
#include "chanprune/errors.hpp"
#include "chanprune/oracle.hpp"
#include "chanprune/scoring.hpp"

namespace chanprune::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kCriteria = {"none", "3sp", "3sp-ca", "snip", "grasp", "grasp-structured", "uniform"};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename V>
void read(const json& j, const char* key, V& into) {
  if (j.contains(key)) into = j.at(key).get<V>();
}

void read_optional(const json& j, const char* key, std::optional<double>& into) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) into.reset();
  else into = j.at(key).get<double>();
}

void reject_unknown(const json& j, const json& defaults, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    if (value.is_object() && defaults.at(key).is_object()) reject_unknown(value, defaults.at(key), where + key + ".");
  }
}

void write_json(const fs::path& file, const json& j) {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

template <typename Fn>
void write_file(const fs::path& file, Fn&& fn) {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot write " + file.string());
  fn(os);
}

fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  fs::path d = fs::path(c.out) / ("seed_" + std::to_string(seed));
  fs::create_directories(d);
  return d;
}

std::string checkpoint_for(const ExperimentConfig& c, std::uint64_t seed) {
  std::string stem = c.checkpoint;
  const std::string key = "{seed}";
  for (auto pos = stem.find(key); pos != std::string::npos; pos = stem.find(key)) {
    stem.replace(pos, key.size(), std::to_string(seed));
  }
  return stem;
}

void require_checkpoint(const std::string& stem) {
  if (stem.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(stem + ".json") || !fs::exists(stem + ".bin")) {
    throw ConfigError("checkpoint not found: " + stem + ".json/.bin");
  }
}

json mask_json(const MaskSet& masks) {
  json j;
  j["layers"] = masks.layers;
  auto& keep = j["keep"] = json::array();
  for (const auto& k : masks.keep) {
    std::string bits;
    for (auto b : k) bits += b ? '1' : '0';
    keep.push_back(bits);
  }
  return j;
}

template <typename T>
struct Pruned {
  ModelGraph<T> model;
  WeightMasks weight_masks;  // unstructured only
};

// structured or unstructured pruning of the dense model; fills `values` and
// writes the per-seed artifacts
template <typename T>
Pruned<T> prune_for_seed(const ExperimentConfig& c, const ModelGraph<T>& dense, const Dataset& train,
                         std::uint64_t seed, const fs::path& dir, json& values) {
  Pruned<T> out{dense, {}};
  if (!c.prunes()) return out;
  const auto batch = scoring_batch<T>(c, train, seed);
  if (c.unstructured()) {
    if (c.flop_target) throw ConfigError("unstructured criteria take --ratio, not --flop-target");
    const auto t0 = std::chrono::steady_clock::now();
    const WeightScores scores = c.criterion == "snip"
                                    ? score_snip_unstructured(dense, batch)
                                    : score_grasp(dense, batch, c.temperature, Granularity::Unstructured).unstructured;
    out.weight_masks = threshold_select_weights(scores, *c.ratio);
    std::size_t slot = 0, zeroed = 0, total = 0;
    for (std::size_t i = 0; i < out.model.layers().size(); ++i) {
      if (!out.model.layer(i).has_weights()) continue;
      auto& w = out.model.params()[i].weight;
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (!out.weight_masks[slot][k]) w[k] = T{0}, ++zeroed;
      }
      total += w.size();
      ++slot;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    json report = {{"criterion", c.criterion},  {"ratio", *c.ratio},          {"weights_total", total},
                   {"weights_pruned", zeroed},  {"sparsity", double(zeroed) / double(total)},
                   {"flops_before", total_flops(dense)}, {"flops_after", total_flops(dense)}, {"prune_ms", ms}};
    write_json(dir / "prune_report.json", report);
    values["sparsity"] = report["sparsity"];
    values["flop_reduction"] = 0.0;
    values["prune_ms"] = ms;
    return out;
  }
  PruneConfig pc = prune_config(c, seed);
  PruneOutcome<T> outcome = prune(dense, batch, pc);
  write_json(dir / "prune_report.json", outcome.report.to_json());
  write_json(dir / "kept_bitmap.json", mask_json(outcome.masks));
  if (!outcome.raw_scores.values.empty()) {
    const ScoreSet retention = c.criterion == "3sp-ca" ? outcome.ranking_scores
                                                        : retention_scores(outcome.raw_scores, outcome.costs);
    write_file(dir / "scores.csv",
               [&](std::ostream& os) { write_score_dump(os, outcome.raw_scores, outcome.costs, retention, outcome.masks); });
  }
  write_file(dir / "flop_audit.csv", [&](std::ostream& os) {
    write_flop_audit(os, dense.layers(), outcome.model.layers(), dense.input_shape());
  });
  const auto j = outcome.report.to_json();
  values["ratio"] = j["ratio"];
  values["flop_reduction"] = j["flop_reduction"];
  values["units_pruned"] = j["units_pruned"];
  values["params_after"] = j["params_after"];
  values["flops_after"] = j["flops_after"];
  values["prune_ms"] = j["prune_ms"];
  out.model = std::move(outcome.model);
  return out;
}

/// Runs `fn(seed, dir, values)` for every seed, recording failures, then
/// writes the resolved config and the aggregate.
template <typename Fn>
std::vector<SeedResult> over_seeds(const ExperimentConfig& c, const std::string& command, Fn&& fn) {
  c.validate();
  fs::create_directories(c.out);
  json resolved = c.to_json();
  resolved["command"] = command;
  write_json(fs::path(c.out) / "resolved_config.json", resolved);
  std::vector<SeedResult> results;
  for (std::uint64_t seed : c.seeds) {
    SeedResult r;
    r.seed = seed;
    r.values = json::object();
    try {
      fn(seed, seed_dir(c, seed), r.values);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
      std::cerr << command << ": seed " << seed << " failed: " << e.what() << '\n';
    }
    results.push_back(std::move(r));
  }
  json agg = aggregate_results(results);
  agg["command"] = command;
  write_json(fs::path(c.out) / "aggregate.json", agg);
  return results;
}

// precision dispatch for subcommands that build models
template <template <typename> class Body>
std::vector<SeedResult> dispatch(const ExperimentConfig& c) {
  if (c.train.precision == "float64") return Body<double>::run(c);
  return Body<float>::run(c);
}

template <typename T>
struct PruneBody {
  static std::vector<SeedResult> run(const ExperimentConfig& c) {
    const auto data = load_data(c.data);
    return over_seeds(c, "prune", [&](std::uint64_t seed, const fs::path& dir, json& values) {
      if (!c.prunes()) throw ConfigError("prune needs a criterion and --ratio or --flop-target");
      const auto dense = initial_model<T>(c, data.train.shape(), data.train.num_classes, seed);
      const auto pruned = prune_for_seed(c, dense, data.train, seed, dir, values);
      values["size_bytes"] = save_checkpoint(pruned.model, dir / "model");
      if (!pruned.weight_masks.empty()) {
        json wm = json::array();
        for (const auto& m : pruned.weight_masks) wm.push_back(m);
        write_json(dir / "weight_masks.json", wm);
      }
    });
  }
};

template <typename T>
struct TrainBody {
  static std::vector<SeedResult> run(const ExperimentConfig& c) {
    const auto data = load_data(c.data);
    return over_seeds(c, "train", [&](std::uint64_t seed, const fs::path& dir, json& values) {
      Pruned<T> p;
      if (!c.checkpoint.empty()) {
        const auto stem = checkpoint_for(c, seed);
        require_checkpoint(stem);
        p.model = load_checkpoint<T>(stem);
      } else {
        const auto dense = initial_model<T>(c, data.train.shape(), data.train.num_classes, seed);
        p = prune_for_seed(c, dense, data.train, seed, dir, values);
      }
      TrainConfig tc = c.train;
      tc.seed = seed;
      TrainHooks hooks;
      hooks.test = &data.test;
      if (!p.weight_masks.empty()) hooks.weight_masks = &p.weight_masks;
      const auto metrics = train(p.model, data.train, tc, hooks);
      write_json(dir / "metrics.json", metrics.to_json());
      write_file(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, metrics); });
      values["size_bytes"] = save_checkpoint(p.model, dir / "model");
      values["test_accuracy"] = metrics.final_accuracy.value_or(0.0);
      double secs = 0.0;
      for (const auto& e : metrics.epochs) secs += e.seconds;
      values["epoch_seconds"] = metrics.epochs.empty() ? 0.0 : secs / double(metrics.epochs.size());
      values["flops"] = total_flops(p.model);
      values["params"] = p.model.parameter_count();
    });
  }
};

template <typename T>
struct EvalBody {
  static std::vector<SeedResult> run(const ExperimentConfig& c) {
    const auto data = load_data(c.data);
    return over_seeds(c, "eval", [&](std::uint64_t seed, const fs::path& dir, json& values) {
      const auto stem = checkpoint_for(c, seed);
      require_checkpoint(stem);
      const auto model = load_checkpoint<T>(stem);
      values["test_accuracy"] = evaluate(model, data.test);
      values["flops"] = total_flops(model);
      values["params"] = model.parameter_count();
      write_json(dir / "eval.json", values);
    });
  }
};

template <typename T>
struct FlopsBody {
  static std::vector<SeedResult> run(const ExperimentConfig& c) {
    // only the geometry matters; no dataset is read
    const ActivationShape shape = c.data.name == "mnist" ? ActivationShape{1, 32, 32, false}
                                  : c.data.name == "cifar10"
                                      ? ActivationShape{3, 32, 32, false}
                                      : ActivationShape{c.data.synthetic.channels, c.data.synthetic.image_size,
                                                        c.data.synthetic.image_size, false};
    const std::size_t classes = c.data.name == "synthetic" ? c.data.synthetic.classes : 10;
    std::optional<DatasetPair> data;
    return over_seeds(c, "flops", [&](std::uint64_t seed, const fs::path& dir, json& values) {
      ModelGraph<T> model;
      if (!c.checkpoint.empty()) {
        const auto stem = checkpoint_for(c, seed);
        require_checkpoint(stem);
        model = load_checkpoint<T>(stem);
      } else {
        const auto dense = initial_model<T>(c, shape, classes, seed);
        if (c.prunes()) {
          if (!data) data = load_data(c.data);
          model = prune_for_seed(c, dense, data->train, seed, dir, values).model;
        } else {
          model = dense;
        }
      }
      values["flops"] = total_flops(model);
      values["mac_flops"] = mac_flops(model);
      values["params"] = model.parameter_count();
      json layers = json::array();
      for (std::size_t i = 0; i < model.layers().size(); ++i) {
        layers.push_back({{"layer", i},
                          {"kind", to_string(model.layer(i).kind)},
                          {"flops", layer_flops(model.layer(i), model.input_of(i), model.output_shapes()[i])}});
      }
      json doc = values;
      doc["layers"] = layers;
      write_json(dir / "flops.json", doc);
    });
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// config

void ExperimentConfig::validate() const {
  if (!kCriteria.count(criterion)) throw ConfigError("unknown criterion '" + criterion + "'");
  if (ratio && flop_target) throw ConfigError("set at most one of ratio and flop_target");
  if (ratio && !(*ratio >= 0.0 && *ratio < 1.0)) throw ConfigError("ratio must be in [0, 1)");
  if (flop_target && !(*flop_target > 0.0 && *flop_target < 1.0)) throw ConfigError("flop_target must be in (0, 1)");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (!(width > 0.0)) throw ConfigError("width must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (score_batch == 0) throw ConfigError("score_batch must be positive");
  if (data.name != "synthetic" && data.name != "cifar10" && data.name != "mnist") {
    throw ConfigError("unknown dataset '" + data.name + "'");
  }
  if (data.name != "synthetic" && data.path.empty()) throw ConfigError("dataset '" + data.name + "' needs a path");
  if (!(active.flop_target > 0.0 && active.flop_target < 1.0)) throw ConfigError("active.flop_target must be in (0, 1)");
  train.validate();
}

json ExperimentConfig::to_json() const {
  const auto& s = data.synthetic;
  json j;
  j["preset"] = preset;
  j["width"] = width;
  j["data"] = {{"name", data.name},
               {"path", data.path},
               {"train_size", data.train_size},
               {"test_size", data.test_size},
               {"synthetic_test", data.synthetic_test},
               {"synthetic",
                {{"classes", s.classes},
                 {"n", s.n},
                 {"seed", s.seed},
                 {"channels", s.channels},
                 {"image_size", s.image_size},
                 {"grid", s.grid},
                 {"margin", s.margin},
                 {"noise", s.noise},
                 {"max_shift", s.max_shift}}}};
  j["criterion"] = criterion;
  j["ratio"] = optional_json(ratio);
  j["flop_target"] = optional_json(flop_target);
  j["lambda"] = lambda;
  j["temperature"] = temperature;
  j["init"] = to_string(init);
  j["keep_at_least_one"] = keep_at_least_one;
  j["score_batch"] = score_batch;
  j["train"] = train.to_json();
  j["seeds"] = seeds;
  j["out"] = out;
  j["checkpoint"] = checkpoint;
  j["validate_approx"] = {{"batch_size", validate_approx.batch_size},
                          {"weight_stride", validate_approx.weight_stride},
                          {"gradnorm_stride", validate_approx.gradnorm_stride}};
  j["active"] = {{"flop_target", active.flop_target},
                 {"budget_seconds", active.budget_seconds},
                 {"per_step", active.per_step},
                 {"initial_per_class", active.initial_per_class},
                 {"round_epochs", active.round_epochs}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& in) {
  if (!in.is_object()) throw ConfigError("config must be a JSON object");
  // resolved_config.json records the subcommand; it is informational
  json j = in;
  j.erase("command");
  ExperimentConfig c;
  reject_unknown(j, c.to_json(), "");
  try {
    read(j, "preset", c.preset);
    read(j, "width", c.width);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read(d, "name", c.data.name);
      read(d, "path", c.data.path);
      read(d, "train_size", c.data.train_size);
      read(d, "test_size", c.data.test_size);
      read(d, "synthetic_test", c.data.synthetic_test);
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        auto& t = c.data.synthetic;
        read(s, "classes", t.classes);
        read(s, "n", t.n);
        read(s, "seed", t.seed);
        read(s, "channels", t.channels);
        read(s, "image_size", t.image_size);
        read(s, "grid", t.grid);
        read(s, "margin", t.margin);
        read(s, "noise", t.noise);
        read(s, "max_shift", t.max_shift);
      }
    }
    read(j, "criterion", c.criterion);
    read_optional(j, "ratio", c.ratio);
    read_optional(j, "flop_target", c.flop_target);
    read(j, "lambda", c.lambda);
    read(j, "temperature", c.temperature);
    if (j.contains("init")) c.init = init_policy_from_string(j.at("init").get<std::string>());
    read(j, "keep_at_least_one", c.keep_at_least_one);
    read(j, "score_batch", c.score_batch);
    if (j.contains("train")) {
      json merged = c.train.to_json();
      merged.update(j.at("train"));
      c.train = TrainConfig::from_json(merged);
    }
    read(j, "seeds", c.seeds);
    read(j, "out", c.out);
    read(j, "checkpoint", c.checkpoint);
    if (j.contains("validate_approx")) {
      const auto& v = j.at("validate_approx");
      read(v, "batch_size", c.validate_approx.batch_size);
      read(v, "weight_stride", c.validate_approx.weight_stride);
      read(v, "gradnorm_stride", c.validate_approx.gradnorm_stride);
    }
    if (j.contains("active")) {
      const auto& a = j.at("active");
      read(a, "flop_target", c.active.flop_target);
      read(a, "budget_seconds", c.active.budget_seconds);
      read(a, "per_step", c.active.per_step);
      read(a, "initial_per_class", c.active.initial_per_class);
      read(a, "round_epochs", c.active.round_epochs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

DatasetPair load_data(const DataConfig& d) {
  DatasetPair pair;
  if (d.name == "synthetic") {
    pair = synthetic_pair(d.synthetic, d.synthetic_test);
  } else if (d.name == "cifar10") {
    pair = load_cifar10(d.path);
  } else if (d.name == "mnist") {
    pair = load_mnist(d.path);
  } else {
    throw ConfigError("unknown dataset '" + d.name + "'");
  }
  // subsets are fixed by the data seed, not the run seed
  if (d.train_size && d.train_size < pair.train.size()) {
    pair.train = subset(pair.train, balanced_indices(pair.train, d.train_size, d.synthetic.seed));
  }
  if (d.test_size && d.test_size < pair.test.size()) {
    pair.test = subset(pair.test, balanced_indices(pair.test, d.test_size, d.synthetic.seed + 1));
  }
  return pair;
}

json aggregate_results(const std::vector<SeedResult>& results) {
  json out;
  std::vector<std::uint64_t> failed;
  std::vector<const SeedResult*> ok;
  json per_seed = json::array();
  for (const auto& r : results) {
    json row = r.values;
    row["seed"] = r.seed;
    row["ok"] = r.ok;
    if (!r.ok) {
      row["error"] = r.error;
      failed.push_back(r.seed);
    } else {
      ok.push_back(&r);
    }
    per_seed.push_back(row);
  }
  json metrics = json::object();
  if (!ok.empty()) {
    for (const auto& [key, value] : ok.front()->values.items()) {
      if (!value.is_number()) continue;
      std::vector<double> xs;
      for (const auto* r : ok)
        if (r->values.contains(key) && r->values.at(key).is_number()) xs.push_back(r->values.at(key).get<double>());
      if (xs.size() != ok.size()) continue;
      const Aggregate a = aggregate(xs);
      metrics[key] = {{"mean", a.mean}, {"se", a.se}, {"sd", a.sd}, {"n", a.n}};
    }
  }
  out["seeds"] = per_seed;
  out["completed"] = ok.size();
  out["failed_seeds"] = failed;
  out["metrics"] = metrics;
  return out;
}

// ---------------------------------------------------------------------------
// helpers shared with tests

template <typename T>
ModelGraph<T> initial_model(const ExperimentConfig& c, const ActivationShape& input, std::size_t classes,
                            std::uint64_t seed) {
  auto m = build_preset<T>(c.preset, classes, c.width, input);
  he_init(m, seed);
  return m;
}

template <typename T>
Batch<T> scoring_batch(const ExperimentConfig& c, const Dataset& train, std::uint64_t seed) {
  const auto idx = balanced_indices(train, std::min(c.score_batch, train.size()), seed);
  return make_batch<T>(train, idx);
}

PruneConfig prune_config(const ExperimentConfig& c, std::uint64_t seed) {
  PruneConfig pc;
  pc.criterion = c.criterion;
  pc.ratio = c.ratio;
  pc.flop_target = c.flop_target;
  pc.lambda = c.lambda;
  pc.temperature = c.temperature;
  pc.init = c.init;
  pc.seed = seed;
  pc.keep_at_least_one = c.keep_at_least_one;
  return pc;
}

template ModelGraph<float> initial_model<float>(const ExperimentConfig&, const ActivationShape&, std::size_t,
                                                std::uint64_t);
template ModelGraph<double> initial_model<double>(const ExperimentConfig&, const ActivationShape&, std::size_t,
                                                  std::uint64_t);
template Batch<float> scoring_batch<float>(const ExperimentConfig&, const Dataset&, std::uint64_t);
template Batch<double> scoring_batch<double>(const ExperimentConfig&, const Dataset&, std::uint64_t);

// ---------------------------------------------------------------------------
// subcommands

std::vector<SeedResult> cmd_prune(const ExperimentConfig& c) { return dispatch<PruneBody>(c); }
std::vector<SeedResult> cmd_train(const ExperimentConfig& c) { return dispatch<TrainBody>(c); }
std::vector<SeedResult> cmd_eval(const ExperimentConfig& c) { return dispatch<EvalBody>(c); }
std::vector<SeedResult> cmd_flops(const ExperimentConfig& c) { return dispatch<FlopsBody>(c); }

std::vector<SeedResult> cmd_validate_approx(const ExperimentConfig& c) {
  // ablation studies always run in 64-bit
  ExperimentConfig vc = c;
  vc.score_batch = c.validate_approx.batch_size;
  const auto data = load_data(c.data);
  return over_seeds(c, "validate-approx", [&](std::uint64_t seed, const fs::path& dir, json& values) {
    const auto model = initial_model<double>(vc, data.train.shape(), data.train.num_classes, seed);
    const auto batch = scoring_batch<double>(vc, data.train, seed);
    const std::string id = "seed" + std::to_string(seed);

    auto study = [&](const std::string& name, const std::vector<AblationRecord>& rec) {
      write_file(dir / ("records_" + name + ".csv"), [&](std::ostream& os) { write_records_csv(os, rec); });
      const auto corr = rank_correlation(rec);
      write_file(dir / ("calibration_" + name + ".csv"), [&](std::ostream& os) { write_calibration_csv(os, corr); });
      values["rho_" + name] = corr.rho;
      values["n_" + name] = corr.n;
    };
    study("structured", study_structured_loss(model, batch, id));
    study("unstructured", study_unstructured_loss(model, batch, c.validate_approx.weight_stride, id));
    study("grasp_structured",
          study_structured_gradnorm(model, batch, c.temperature, c.validate_approx.gradnorm_stride, id));
    write_json(dir / "correlation.json", values);
  });
}

std::vector<SeedResult> cmd_active(const ExperimentConfig& c) {
  const auto data = load_data(c.data);
  return over_seeds(c, "active-learn", [&](std::uint64_t seed, const fs::path& dir, json& values) {
    AcquisitionConfig ac;
    ac.budget_seconds = c.active.budget_seconds;
    ac.per_step = c.active.per_step;
    ac.initial_per_class = c.active.initial_per_class;
    ac.round_train = c.train;
    ac.round_train.epochs = c.active.round_epochs;
    ac.round_train.milestones = {};
    ac.round_train.seed = seed;
    ac.seed = seed;

    ModelFactory<float> full = [&](const Dataset&) {
      return initial_model<float>(c, data.train.shape(), data.train.num_classes, seed);
    };
    ModelFactory<float> pruned = [&](const Dataset& initial) {
      ExperimentConfig pc = c;
      pc.criterion = c.criterion == "none" ? "3sp" : c.criterion;
      pc.ratio.reset();
      pc.flop_target = c.active.flop_target;
      const auto dense = initial_model<float>(c, data.train.shape(), data.train.num_classes, seed);
      const auto batch = scoring_batch<float>(pc, initial, seed);
      return prune(dense, batch, prune_config(pc, seed)).model;
    };
    const auto sf = acquisition_loop<float>(full, data.train, data.test, ac);
    const auto sp = acquisition_loop<float>(pruned, data.train, data.test, ac);
    write_file(dir / "trace.csv", [&](std::ostream& os) {
      write_trace_csv(os, "full", sf);
      write_trace_csv(os, "pruned", sp, false);
    });
    values["rounds_full"] = sf.acquisitions;
    values["rounds_pruned"] = sp.acquisitions;
    values["accuracy_full"] = sf.final_accuracy(ac.budget_seconds);
    values["accuracy_pruned"] = sp.final_accuracy(ac.budget_seconds);
    values["labeled_full"] = sf.labeled.size();
    values["labeled_pruned"] = sp.labeled.size();
  });
}

}  // namespace chanprune::cli
