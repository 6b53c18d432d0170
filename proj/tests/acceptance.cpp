// Acceptance checks. One PASS/FAIL line per criterion; `--only N` runs one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "chanprune/active.hpp"
#include "chanprune/compute.hpp"
#include "chanprune/kernels.hpp"
#include "chanprune/oracle.hpp"
#include "chanprune/pruner.hpp"
#include "chanprune/scoring.hpp"
#include "chanprune/trainer.hpp"
#include "helpers.hpp"

using namespace chanprune;
namespace fs = std::filesystem;
using testutil::fd_check;
using testutil::project;
using testutil::random_batch;
using testutil::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path out;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Stand-in for CIFAR-10: 10 classes of smooth 32x32x3 patterns under random
// translation and pixel noise.
SyntheticConfig cifar_like(std::size_t n) {
  SyntheticConfig c;
  c.classes = 10;
  c.n = n;
  c.seed = 2024;
  c.channels = 3;
  c.image_size = 32;
  c.grid = 4;
  c.margin = 0.12;
  c.noise = 1.0;
  c.max_shift = 16;
  return c;
}

template <typename T>
ModelGraph<T> tiny_vgg(std::uint64_t seed) {
  auto m = build_preset<T>("tiny-vgg", 10, 1.0, {3, 32, 32, false});
  he_init(m, seed);
  return m;
}

double loss_of(const ModelGraph<double>& m, const Batch<double>& b, Mode mode) {
  Tape<double> t;
  ForwardOptions opt;
  opt.mode = mode;
  opt.param_grads = false;
  const auto pass = forward(m, t, b.images, opt);
  return t.value(ops::softmax_cross_entropy(t, pass.logits, std::span<const int>(b.labels)))[0];
}

// a mask with every entry Bernoulli(keep) and at least one unit per layer
MaskSet random_keep(const MaskSet& ones, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> rate(0.0, 0.8);
  MaskSet m = ones;
  for (auto& k : m.keep) {
    std::bernoulli_distribution drop(rate(gen));
    for (auto& v : k) v = drop(gen) ? 0 : 1;
    k[gen() % k.size()] = 1;
  }
  return m;
}

// ---------------------------------------------------------------------------
// 1

Outcome gradient_correctness(const Context&) {
  std::vector<std::pair<std::string, double>> errs;
  using V = std::vector<Var>;
  using TapeD = Tape<double>;
  errs.emplace_back("conv2d", fd_check({random_tensor({2, 3, 6, 6}, 1), random_tensor({4, 3, 3, 3}, 2),
                                        random_tensor({4}, 3)},
                                       [](TapeD& t, const V& v) {
                                         return project(t, ops::conv2d(t, v[0], v[1], v[2], 1, 1));
                                       }));
  errs.emplace_back("conv2d stride 2", fd_check({random_tensor({1, 2, 7, 7}, 4), random_tensor({3, 2, 3, 3}, 5)},
                                                [](TapeD& t, const V& v) {
                                                  return project(t, ops::conv2d(t, v[0], v[1], Var{}, 0, 2));
                                                }));
  errs.emplace_back("linear", fd_check({random_tensor({3, 5}, 6), random_tensor({4, 5}, 7), random_tensor({4}, 8)},
                                       [](TapeD& t, const V& v) {
                                         return project(t, ops::linear(t, v[0], v[1], v[2]));
                                       }));
  const std::vector<double> rm = {0.1, -0.2, 0.3}, rv = {1.5, 0.7, 1.1};
  for (auto mode : {Mode::Train, Mode::Eval}) {
    errs.emplace_back(mode == Mode::Train ? "batchnorm train" : "batchnorm eval",
                      fd_check({random_tensor({4, 3, 3, 3}, 9), random_tensor({3}, 10), random_tensor({3}, 11)},
                               [&](TapeD& t, const V& v) {
                                 return project(t, ops::batchnorm(t, v[0], v[1], v[2], std::span<const double>(rm),
                                                                  std::span<const double>(rv), mode, 1e-5));
                               }));
  }
  auto x = random_tensor({2, 3, 4, 4}, 12);
  for (double& v : x.data()) v += v < 0 ? -0.05 : 0.05;  // away from the relu kink
  auto unary = [&](const char* name, auto fn) {
    errs.emplace_back(name, fd_check({x}, [&](TapeD& t, const V& v) { return project(t, fn(t, v[0])); }));
  };
  unary("relu", [](TapeD& t, Var v) { return ops::relu(t, v); });
  unary("maxpool2d", [](TapeD& t, Var v) { return ops::maxpool2d(t, v, 2); });
  unary("avgpool2d", [](TapeD& t, Var v) { return ops::avgpool2d(t, v, 2, 2); });
  unary("flatten", [](TapeD& t, Var v) { return ops::flatten(t, v); });
  unary("scale", [](TapeD& t, Var v) { return ops::scale(t, v, -1.5); });
  unary("sum", [](TapeD& t, Var v) { return ops::sum(t, v); });
  const std::vector<double> gate = {1.0, 0.0, 2.0};
  unary("channel_gate", [&](TapeD& t, Var v) { return ops::channel_gate(t, v, std::span<const double>(gate)); });
  errs.emplace_back("channel_scale", fd_check({random_tensor({2, 3, 2, 2}, 13), random_tensor({3}, 14)},
                                              [](TapeD& t, const V& v) {
                                                return project(t, ops::channel_scale(t, v[0], v[1]));
                                              }));
  errs.emplace_back("add", fd_check({random_tensor({3, 4}, 15), random_tensor({3, 4}, 16)},
                                    [](TapeD& t, const V& v) { return project(t, ops::add(t, v[0], v[1])); }));
  errs.emplace_back("mul", fd_check({random_tensor({3, 4}, 17), random_tensor({3, 4}, 18)},
                                    [](TapeD& t, const V& v) { return project(t, ops::mul(t, v[0], v[1])); }));
  const std::vector<int> labels = {0, 2, 1, 2};
  for (double temp : {1.0, 200.0}) {
    errs.emplace_back(fmt("cross-entropy T=%g", temp), fd_check({random_tensor({4, 3}, 19)}, [&](TapeD& t, const V& v) {
                        return ops::softmax_cross_entropy(t, v[0], std::span<const int>(labels), temp);
                      }));
  }

  // full tiny-VGG in train mode, sampled parameters of every kind
  auto m = tiny_vgg<double>(11);
  testutil::randomize_batchnorm(m, 12);
  const auto b = random_batch<double>(m.input_shape(), 4, 10, 13);
  Tape<double> tape;
  ForwardOptions opt;
  opt.mode = Mode::Train;
  const auto pass = forward(m, tape, b.images, opt);
  tape.backward(ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(b.labels)));
  std::mt19937_64 gen(14);
  std::vector<std::size_t> layers;
  for (std::size_t i = 0; i < m.layers().size(); ++i)
    if (m.layer(i).has_weights() || m.layer(i).kind == LayerKind::BatchNorm) layers.push_back(i);
  double net = 0.0;
  const int samples = 60;
  for (int s = 0; s < samples; ++s) {
    const std::size_t layer = layers[gen() % layers.size()];
    const bool bn = m.layer(layer).kind == LayerKind::BatchNorm;
    const int field = int(gen() % 2);
    Tensor<double>& target = bn ? (field ? m.params()[layer].gamma : m.params()[layer].beta)
                                : (field ? m.params()[layer].weight : m.params()[layer].bias);
    const Var v = bn ? (field ? pass.params[layer].gamma : pass.params[layer].beta)
                     : (field ? pass.params[layer].weight : pass.params[layer].bias);
    const std::size_t idx = gen() % target.size();
    const double analytic = tape.grad(v)[idx];
    // small step: thousands of relu kinks sit downstream of early layers
    const double theta = target[idx], h = 1e-6 * std::max(1.0, std::abs(theta));
    target[idx] = theta + h;
    const double up = loss_of(m, b, Mode::Train);
    target[idx] = theta - h;
    const double down = loss_of(m, b, Mode::Train);
    target[idx] = theta;
    const double numeric = (up - down) / (2 * h);
    // conv biases ahead of train-mode batchnorm have an exactly zero gradient
    net = std::max(net, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4}));
  }
  errs.emplace_back("tiny-vgg", net);

  double worst = 0.0;
  std::string where;
  for (const auto& [name, e] : errs)
    if (e >= worst) worst = e, where = name;
  return {worst < 1e-3, fmt("%zu checks (ops + tiny-vgg, %d sampled params); worst rel err %.2e (%s), need < 1e-3",
                            errs.size(), samples, worst, where.c_str())};
}

// ---------------------------------------------------------------------------
// 2

template <typename T>
double logit_gap(const ModelGraph<T>& model, const MaskSet& masks, const Tensor<T>& x) {
  const auto full = predict(model, x, &masks);
  const auto small = predict(shrink(model, masks), x);
  double gap = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    gap = std::max(gap, std::abs(double(full[i]) - double(small[i])));
    scale = std::max(scale, std::abs(double(full[i])));
  }
  return gap / std::max(scale, 1e-30);
}

Outcome surgery_equivalence(const Context&) {
  std::mt19937_64 gen(17);
  double worst = 0.0;
  std::size_t pairs = 0;
  auto run = [&](ModelGraph<float> m, std::uint64_t seed, std::size_t batch) {
    testutil::randomize_batchnorm(m, seed + 1000);
    for (std::size_t i = 0; i < m.layers().size(); ++i)
      if (m.layer(i).has_weights()) m.params()[i].bias = random_tensor<float>({m.layer(i).out_units}, seed + i, 0.1);
    const auto masks = random_keep(m.ones_mask(), gen);
    const auto& in = m.input_shape();
    const auto x = random_tensor<float>({batch, in.channels, in.height, in.width}, seed);
    worst = std::max(worst, logit_gap(m, masks, x));
    ++pairs;
  };
  for (std::uint64_t s = 0; s < 60; ++s) run(testutil::tiny_net<float>(s, 3 + s % 6, 2 + s % 4), s, 4);
  for (std::uint64_t s = 0; s < 25; ++s) {
    auto m = build_preset<float>("mlp", 2 + s % 5, 0.25 + 0.05 * double(s % 4), {1, 8, 8, false});
    he_init(m, s);
    run(std::move(m), 100 + s, 4);
  }
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto m = build_preset<float>("small-cnn", 10, 1.0 + double(s), {3, 8, 8, false});
    he_init(m, s);
    run(std::move(m), 200 + s, 4);
  }
  for (std::uint64_t s = 0; s < 10; ++s) run(tiny_vgg<float>(s), 300 + s, 2);
  return {pairs >= 100 && worst < 1e-5,
          fmt("%zu (model, mask) pairs in float32; worst relative logit gap %.2e, need < 1e-5", pairs, worst)};
}

// ---------------------------------------------------------------------------
// 3

Outcome score_decomposition(const Context&) {
  double worst = 0.0;
  std::size_t units = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto m = seed <= 10 ? testutil::tiny_net<double>(seed, 2 + seed % 6, 2 + seed % 4)
                        : build_preset<double>("mlp", 4, 0.5, {2, 6, 6, false});
    if (seed > 10) he_init(m, seed);
    testutil::randomize_batchnorm(m, seed + 10);
    for (std::size_t i = 0; i < m.layers().size(); ++i)
      if (m.layer(i).has_weights()) m.params()[i].bias = random_tensor({m.layer(i).out_units}, seed + i, 0.1);
    const auto b = random_batch<double>(m.input_shape(), 5, m.num_classes(), seed + 20);
    const auto ones = m.ones_mask();
    Tape<double> tape;
    const auto pass = forward_masked(m, tape, b.images, ones, Mode::Eval);
    tape.backward(ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(b.labels)));
    for (std::size_t s = 0; s < ones.layers.size(); ++s) {
      const std::size_t layer = ones.layers[s];
      const auto& p = m.params()[layer];
      const auto gw = tape.grad(pass.params[layer].weight), gb = tape.grad(pass.params[layer].bias);
      const auto gm = tape.grad(pass.masks[s]);
      const std::size_t per = p.weight.size() / m.layer(layer).out_units;
      for (std::size_t u = 0; u < m.layer(layer).out_units; ++u) {
        double sum = p.bias[u] * gb[u];
        for (std::size_t k = 0; k < per; ++k) sum += p.weight[u * per + k] * gw[u * per + k];
        worst = std::max(worst, testutil::rel_error(gm[u], sum));
        ++units;
      }
    }
  }
  return {worst < 1e-4, fmt("%zu units over 12 randomized nets (64-bit); worst rel err %.2e, need < 1e-4", units, worst)};
}

// ---------------------------------------------------------------------------
// 4

Outcome flop_accounting(const Context&) {
  struct Case {
    std::string name;
    ActivationShape in;
  };
  const std::vector<Case> cases = {
      {"vgg19", {3, 32, 32, false}}, {"tiny-vgg", {3, 32, 32, false}}, {"small-cnn", {3, 8, 8, false}}, {"mlp", {1, 32, 32, false}}};
  std::size_t checked = 0, mismatched = 0;
  std::mt19937_64 gen(5);
  for (const auto& c : cases) {
    auto m = build_preset<float>(c.name, 10, 1.0, c.in);
    he_init(m, 1);
    std::vector<ModelGraph<float>> models = {m};
    for (int r = 0; r < 3; ++r) models.push_back(shrink(m, random_keep(m.ones_mask(), gen)));
    // one scored prune as well (small batch keeps vgg19 scoring quick)
    PruneConfig pc;
    pc.ratio = 0.5;
    pc.keep_at_least_one = true;
    models.push_back(prune(m, random_batch<float>(c.in, 4, 10, 3), pc).model);
    for (const auto& x : models) {
      ++checked;
      if (mac_flops(x) != 2 * instrumented_macs(x)) ++mismatched;
    }
  }

  // smoothing properties on tiny-vgg costs
  auto tv = tiny_vgg<double>(3);
  const auto costs = cost_table(tv, 0.0);
  double scale_gap = 0.0;
  for (double lambda : {0.0, 10.0, 1e4}) {
    const auto a = smooth_normalize(costs.raw, lambda);
    std::vector<double> scaled = costs.raw;
    for (double& v : scaled) v *= 37.5;
    const auto b = smooth_normalize(scaled, lambda * 37.5);
    for (std::size_t i = 0; i < a.size(); ++i) scale_gap = std::max(scale_gap, std::abs(a[i] - b[i]));
  }
  const auto big = smooth_normalize(costs.raw, 1e15);
  double to_one = 0.0;
  for (double v : big) to_one = std::max(to_one, std::abs(v - 1.0));

  // ranking agreement at lambda = 1e9 on every preset; an inversion is a pair
  // of units ordered differently by the two rankings
  auto flat = [](const ScoreSet& s) {
    std::vector<double> f;
    for (const auto& v : s.values) f.insert(f.end(), v.begin(), v.end());
    return f;
  };
  std::string ranking;
  bool same_order = true;
  for (const auto& c : cases) {
    auto m = build_preset<double>(c.name, 10, 1.0, c.in);
    he_init(m, 4);
    const auto scores = score_3sp(m, random_batch<double>(c.in, 4, 10, 4));
    const auto a = flat(scores), b = flat(retention_scores(scores, cost_table(m, 1e9)));
    std::vector<std::size_t> ia(a.size()), ib(b.size());
    std::iota(ia.begin(), ia.end(), std::size_t{0});
    ib = ia;
    std::stable_sort(ia.begin(), ia.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
    std::stable_sort(ib.begin(), ib.end(), [&](std::size_t i, std::size_t j) { return b[i] < b[j]; });
    std::size_t moved = 0;
    for (std::size_t i = 0; i < ia.size(); ++i) moved += ia[i] != ib[i];
    const auto spread = smooth_normalize(cost_table(m, 0.0).raw, 1e9);
    const double low = *std::min_element(spread.begin(), spread.end());
    same_order = same_order && moved == 0;
    ranking += fmt("%s%s %zu/%zu positions differ (min c_tilde %.6f)", ranking.empty() ? "" : ", ", c.name.c_str(),
                   moved, a.size(), low);
  }

  const bool pass = mismatched == 0 && scale_gap < 1e-12 && to_one < 1e-6 && same_order;
  return {pass, fmt("mac identity %zu/%zu models (4 presets, dense and pruned); scale invariance gap %.1e; "
                    "max |c_tilde - 1| at lambda=1e15 %.1e; argsort(3sp-ca, lambda=1e9) vs argsort(3sp): %s",
                    checked - mismatched, checked, scale_gap, to_one, ranking.c_str())};
}

// ---------------------------------------------------------------------------
// 5

Outcome threshold_contract(const Context&) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  std::vector<ScoreSet> sets;
  auto make = [&](std::vector<std::size_t> widths, auto value) {
    ScoreSet s;
    s.criterion = "contract";
    for (std::size_t i = 0; i < widths.size(); ++i) {
      s.layers.push_back(i);
      std::vector<double> v(widths[i]);
      for (auto& x : v) x = value();
      s.values.push_back(std::move(v));
    }
    sets.push_back(std::move(s));
  };
  make({16, 16, 32, 32, 64, 128, 256, 10}, [&] { return std::abs(nd(gen)); });
  make({7, 3, 11}, [&] { return std::abs(nd(gen)); });
  make({5, 9, 2, 40}, [] { return 0.25; });  // all tied
  make({30, 30, 30}, [&] { return std::round(std::abs(nd(gen)) * 2.0) / 2.0; });  // coarse, many ties
  make({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, [&] { return std::abs(nd(gen)); });

  std::size_t runs = 0, bad = 0;
  std::string first;
  for (std::size_t si = 0; si < sets.size(); ++si) {
    const auto& s = sets[si];
    const std::size_t n = s.total();
    std::vector<std::pair<double, std::size_t>> flat;  // (score, position in layer-major order)
    for (const auto& v : s.values)
      for (double x : v) flat.emplace_back(x, flat.size());
    for (int step = 0; step <= 19; ++step) {
      const double p = 0.05 * step;
      const std::size_t expect = static_cast<std::size_t>(std::floor(p * double(n) + 1e-9));
      const auto sel = threshold_select(s, p);
      ++runs;
      // exact count, and the pruned set is the first `expect` of a stable
      // ascending sort (ties broken by layer, then unit)
      auto sorted = flat;
      std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
      std::vector<std::uint8_t> want(n, 1);
      for (std::size_t k = 0; k < expect; ++k) want[sorted[k].second] = 0;
      std::vector<std::uint8_t> got;
      for (const auto& k : sel.masks.keep) got.insert(got.end(), k.begin(), k.end());
      if (sel.masks.pruned_units() != expect || sel.prune_count != expect || got != want) {
        ++bad;
        if (first.empty()) first = fmt("set %zu p=%.2f pruned %zu expected %zu", si, p, sel.masks.pruned_units(), expect);
      }
      // the keep-at-least-one guard keeps the count exact whenever it can be honoured
      if (n - expect >= s.values.size()) {
        ThresholdOptions guard;
        guard.keep_at_least_one = true;
        const auto g = threshold_select(s, p, guard);
        ++runs;
        if (g.masks.pruned_units() != expect) {
          ++bad;
          if (first.empty()) first = fmt("guarded set %zu p=%.2f", si, p);
        }
      }
    }
  }
  return {bad == 0, fmt("%zu selections over 5 score sets (incl. all-tied), p = 0..0.95 step 0.05: %zu wrong%s%s", runs,
                        bad, first.empty() ? "" : "; first: ", first.c_str())};
}

// ---------------------------------------------------------------------------
// 6

Outcome approximation_quality(const Context& ctx) {
  const auto data = synthetic_pair(cifar_like(512), 10);
  const auto m = tiny_vgg<double>(21);
  const auto idx = balanced_indices(data.train, 32, 21);
  const auto batch = make_batch<double>(data.train, idx);

  const auto structured = study_structured_loss(m, batch, "c6");
  const auto unstructured = study_unstructured_loss(m, batch, 1097, "c6");
  const auto grasp = study_structured_gradnorm(m, batch, kGraspTemperature, 4, "c6");
  const auto cs = rank_correlation(structured);
  const auto cu = rank_correlation(unstructured);
  const auto cg = rank_correlation(grasp);
  fs::create_directories(ctx.out);
  {
    std::ofstream os(ctx.out / "calibration_structured.csv");
    write_calibration_csv(os, cs);
    std::ofstream ou(ctx.out / "calibration_unstructured.csv");
    write_calibration_csv(ou, cu);
    std::ofstream og(ctx.out / "calibration_grasp_structured.csv");
    write_calibration_csv(og, cg);
  }
  const bool pass = cs.rho > 0.3 && cu.rho > 0.8 && cg.rho < cs.rho;
  return {pass, fmt("tiny-vgg, one 32-example batch: structured rho %.3f (n=%zu, need > 0.3); unstructured rho %.3f "
                    "(n=%zu, need > 0.8); structured GraSP rho %.3f (n=%zu, need < structured)",
                    cs.rho, cs.n, cu.rho, cu.n, cg.rho, cg.n)};
}

// ---------------------------------------------------------------------------
// 7

Outcome accuracy_ordering(const Context& ctx) {
  const auto data = synthetic_pair(cifar_like(10000), 2000);
  TrainConfig tc;  // 20 epochs, lr 0.1 halved at 10 and 15, batch 128
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> acc_3sp, acc_uniform;
  std::uint64_t flops_3sp = 0, flops_ca = 0;
  std::ofstream log(ctx.out / "accuracy_ordering.csv");
  log << "seed,criterion,flop_reduction,test_accuracy\n";
  for (std::uint64_t seed : seeds) {
    const auto dense = tiny_vgg<float>(seed);
    const auto batch = make_batch<float>(data.train, balanced_indices(data.train, 128, seed));
    for (const std::string crit : {"3sp", "uniform"}) {
      PruneConfig pc;
      pc.criterion = crit;
      pc.ratio = 0.8;
      pc.seed = seed;
      pc.keep_at_least_one = true;
      auto out = prune(dense, batch, pc);
      tc.seed = seed;
      TrainHooks hooks;
      hooks.test = &data.test;
      const auto metrics = train(out.model, data.train, tc, hooks);
      const double acc = *metrics.final_accuracy;
      (crit == "3sp" ? acc_3sp : acc_uniform).push_back(acc);
      log << seed << ',' << crit << ',' << 1.0 - double(out.report.flops_after) / double(out.report.flops_before) << ','
          << acc << '\n' << std::flush;
    }
    if (seed == seeds.front()) {
      PruneConfig pc;
      pc.ratio = 0.8;
      pc.keep_at_least_one = true;
      flops_3sp = prune(dense, batch, pc).report.flops_after;
      pc.criterion = "3sp-ca";
      pc.lambda = 0.0;
      flops_ca = prune(dense, batch, pc).report.flops_after;
    }
  }
  const auto a = aggregate(acc_3sp), u = aggregate(acc_uniform);
  const double pooled = std::sqrt(a.se * a.se + u.se * u.se);
  const double gap = a.mean - u.mean;
  const bool pass = gap > 2.0 * pooled && flops_ca < flops_3sp;
  return {pass, fmt("tiny-vgg, 10k synthetic examples, 20 epochs, 5 seeds, 80%% of units pruned: 3sp %.2f%% +- %.2f, "
                    "uniform %.2f%% +- %.2f, gap %.2f pp vs 2x pooled s.e. %.2f pp; FLOPs kept 3sp-ca %llu < 3sp %llu",
                    100 * a.mean, 100 * a.se, 100 * u.mean, 100 * u.se, 100 * gap, 200 * pooled,
                    static_cast<unsigned long long>(flops_ca), static_cast<unsigned long long>(flops_3sp))};
}

// ---------------------------------------------------------------------------
// 8

std::uintmax_t checkpoint_bytes(const ModelGraph<float>& m, const fs::path& stem) {
  save_checkpoint(m, stem);
  return fs::file_size(stem.string() + ".json") + fs::file_size(stem.string() + ".bin");
}

Outcome speed_and_size(const Context& ctx) {
  const auto data = synthetic_pair(cifar_like(2048), 10);
  const auto dense = tiny_vgg<float>(8);
  const auto batch = make_batch<float>(data.train, balanced_indices(data.train, 128, 8));
  PruneConfig pc;
  pc.flop_target = 0.82;
  pc.keep_at_least_one = true;
  const auto out = prune(dense, batch, pc);
  const double reduction = 1.0 - double(out.report.flops_after) / double(out.report.flops_before);

  TrainConfig tc;
  tc.epochs = 3;
  tc.milestones = {};
  const double t_dense = time_epoch(dense, data.train, tc, 1, 2);
  const double t_pruned = time_epoch(out.model, data.train, tc, 1, 2);
  const double step = time_train_step(dense, batch, 5);
  fs::create_directories(ctx.out);
  const double size_dense = double(checkpoint_bytes(dense, ctx.out / "dense"));
  const double size_pruned = double(checkpoint_bytes(out.model, ctx.out / "pruned"));
  const double speedup = t_dense / t_pruned, shrink_ratio = size_dense / size_pruned;
  const double prune_s = out.report.prune_ms / 1000.0;
  const bool pass = reduction >= 0.8 && speedup > 1.5 && shrink_ratio > 4.0 && prune_s < 3.0 * step;
  return {pass, fmt("FLOP reduction %.1f%% (need >= 80%%); epoch %.2fs -> %.2fs, speedup %.2fx (need > 1.5); "
                    "size %.0f -> %.0f bytes, %.2fx (need > 4); pruning %.3fs vs training step %.3fs (need < 3x)",
                    100 * reduction, t_dense, t_pruned, speedup, size_dense, size_pruned, shrink_ratio, prune_s, step)};
}

// ---------------------------------------------------------------------------
// 9

Outcome active_learning(const Context& ctx) {
  const auto data = synthetic_pair(cifar_like(5000), 1000);
  AcquisitionConfig ac;
  ac.per_step = 50;
  ac.initial_per_class = 100;
  ac.round_train.epochs = 3;
  ac.round_train.milestones = {};
  ac.round_train.batch_size = 64;
  ac.round_train.lr = 0.05;

  // budget: ten rounds of the full model, timed on one round with the
  // initial labeled set
  double round_seconds = 0.0;
  {
    auto m = tiny_vgg<float>(100);
    const auto initial = subset(data.train, balanced_indices(data.train, 10 * ac.initial_per_class, 100));
    std::vector<std::size_t> pool(data.train.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    const auto t0 = Clock::now();
    train(m, initial, ac.round_train);
    entropy_scores(m, data.train, pool);
    round_seconds = seconds_since(t0);
  }
  ac.budget_seconds = 10.0 * round_seconds;

  std::vector<double> rounds_full, rounds_pruned, acc_full, acc_pruned;
  std::ofstream trace(ctx.out / "active_trace.csv");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ac.seed = seed;
    ac.round_train.seed = seed;
    ModelFactory<float> full = [&](const Dataset&) { return tiny_vgg<float>(seed); };
    ModelFactory<float> pruned = [&](const Dataset& initial) {
      PruneConfig pc;
      pc.flop_target = 0.5;
      pc.keep_at_least_one = true;
      pc.seed = seed;
      const auto b = make_batch<float>(initial, balanced_indices(initial, 128, seed));
      return prune(tiny_vgg<float>(seed), b, pc).model;
    };
    const auto sf = acquisition_loop(full, data.train, data.test, ac);
    const auto sp = acquisition_loop(pruned, data.train, data.test, ac);
    write_trace_csv(trace, "full_seed" + std::to_string(seed), sf, seed == 0);
    write_trace_csv(trace, "pruned_seed" + std::to_string(seed), sp, false);
    rounds_full.push_back(double(sf.acquisitions));
    rounds_pruned.push_back(double(sp.acquisitions));
    acc_full.push_back(sf.final_accuracy(ac.budget_seconds));
    acc_pruned.push_back(sp.final_accuracy(ac.budget_seconds));
  }
  const auto rf = aggregate(rounds_full), rp = aggregate(rounds_pruned);
  const auto af = aggregate(acc_full), ap = aggregate(acc_pruned);
  const bool pass = rp.mean > rf.mean && ap.mean >= af.mean - 0.01;
  return {pass, fmt("budget %.1fs (10 full rounds), 5 seeds: rounds pruned %.1f vs full %.1f; accuracy pruned %.2f%% "
                    "+- %.2f vs full %.2f%% +- %.2f (need >= full - 1 pp)",
                    ac.budget_seconds, rp.mean, rf.mean, 100 * ap.mean, 100 * ap.se, 100 * af.mean, 100 * af.se)};
}

// ---------------------------------------------------------------------------
// 10

Outcome single_shot(const Context&) {
  const auto m = tiny_vgg<float>(31);
  const auto b = random_batch<float>(m.input_shape(), 128, 10, 32);
  const auto before = flat_weights(m);
  std::string detail;
  bool pass = true;
  for (const std::string crit : {"3sp", "3sp-ca"}) {
    PruneConfig pc;
    pc.criterion = crit;
    pc.ratio = 0.5;
    pc.keep_at_least_one = true;
    kernels::CounterScope scope;
    const auto out = prune(m, b, pc);
    const auto d = scope.delta();
    const bool ok = d.forward_passes == 1 && d.backward_passes == 1 && out.raw_scores.batch_size == 128;
    pass = pass && ok;
    detail += fmt("%s: %llu forward, %llu backward; ", crit.c_str(), static_cast<unsigned long long>(d.forward_passes),
                  static_cast<unsigned long long>(d.backward_passes));
  }
  kernels::CounterScope scope;
  score_3sp(m, b);
  pass = pass && scope.delta().forward_passes == 1 && scope.delta().backward_passes == 1;
  const bool untouched = flat_weights(m) == before;
  pass = pass && untouched;
  return {pass, detail + fmt("score_3sp alone: %llu/%llu; weights untouched: %s",
                             static_cast<unsigned long long>(scope.delta().forward_passes),
                             static_cast<unsigned long long>(scope.delta().backward_passes), untouched ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  double limit_seconds;
  Outcome (*run)(const Context&);
};

const Criterion kCriteria[] = {
    {"gradient correctness", 60, gradient_correctness},
    {"surgery equals masking", 120, surgery_equivalence},
    {"score decomposition", 60, score_decomposition},
    {"FLOP accounting and smoothing", 60, flop_accounting},
    {"threshold contract", 60, threshold_contract},
    {"approximation quality", 15 * 60, approximation_quality},
    {"accuracy ordering at 80%", 2 * 3600, accuracy_ordering},
    {"speed and size at 80% FLOPs", 10 * 60, speed_and_size},
    {"active learning under a budget", 3 * 3600, active_learning},
    {"single-shot scoring", 60, single_shot},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  std::string out = "acceptance_out";
  app.add_option("--only", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--out", out, "directory for CSV artifacts");
  CLI11_PARSE(app, argc, argv);

  Context ctx{out};
  fs::create_directories(ctx.out);
  int failures = 0;
  for (int i = 1; i <= 10; ++i) {
    if (only && only != i) continue;
    const Criterion& c = kCriteria[i - 1];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << "criterion " << i << ' ' << (pass ? "PASS" : "FAIL") << " [" << c.name << "] " << o.detail
              << fmt("; %.1fs (limit %.0fs)%s", secs, c.limit_seconds, in_time ? "" : " OVER TIME") << std::endl;
  }
  return failures ? 1 : 0;
}
