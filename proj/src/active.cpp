#include "chanprune/active.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace chanprune {

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

template <typename T>
std::vector<double> entropy_scores(const ModelGraph<T>& model, const Dataset& data,
                                   std::span<const std::size_t> indices, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t at = 0; at < indices.size(); at += batch_size) {
    const auto chunk = indices.subspan(at, std::min(batch_size, indices.size() - at));
    const Batch<T> batch = make_batch<T>(data, chunk);
    const Tensor<T> logits = predict(model, batch.images);
    const std::vector<T> probs = ops::softmax_rows(logits);
    const std::size_t classes = logits.dim(1);
    std::vector<double> row(classes);
    for (std::size_t n = 0; n < chunk.size(); ++n) {
      for (std::size_t c = 0; c < classes; ++c) row[c] = double(probs[n * classes + c]);
      out.push_back(entropy(row));
    }
  }
  return out;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  order.resize(k);
  return order;
}

double AcquisitionState::final_accuracy(double budget_seconds) const {
  if (trace.empty()) return 0.0;
  double acc = trace.front().test_accuracy;
  for (const auto& p : trace)
    if (p.wall_seconds <= budget_seconds) acc = p.test_accuracy;
  return acc;
}

template <typename T>
AcquisitionState acquisition_loop(const ModelFactory<T>& factory, const Dataset& train_set, const Dataset& test_set,
                                  const AcquisitionConfig& config) {
  if (!(config.budget_seconds > 0.0)) throw ConfigError("acquisition budget must be positive");
  if (config.per_step == 0) throw ConfigError("points per step must be positive");
  AcquisitionState state;

  // initial set: the first initial_per_class examples of each class in a seeded shuffle
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 gen(config.seed);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::size_t> taken(std::max<std::size_t>(train_set.num_classes, 1), 0);
  std::vector<std::uint8_t> labeled(train_set.size(), 0);
  for (std::size_t i : order) {
    auto& t = taken.at(static_cast<std::size_t>(train_set.labels[i]));
    if (t < config.initial_per_class) {
      ++t;
      labeled[i] = 1;
    }
  }
  for (std::size_t i = 0; i < train_set.size(); ++i) (labeled[i] ? state.labeled : state.pool).push_back(i);
  if (state.labeled.size() < 2) throw ConfigError("initial labeled set is too small");

  ModelGraph<T> model = factory(subset(train_set, state.labeled));

  using Clock = std::chrono::steady_clock;
  double elapsed = 0.0;
  auto resume = Clock::now();
  auto lap = [&] { return elapsed + std::chrono::duration<double>(Clock::now() - resume).count(); };

  for (std::size_t round = 0;; ++round) {
    TrainConfig tc = config.round_train;
    tc.seed = config.round_train.seed + round;
    train(model, subset(train_set, state.labeled), tc);
    elapsed = lap();
    const double eval_acc = evaluate(model, test_set);  // off the clock
    state.trace.push_back({round, elapsed, state.labeled.size(), eval_acc});
    resume = Clock::now();
    if (elapsed >= config.budget_seconds) break;
    if (state.pool.empty()) {
      state.pool_exhausted = true;
      break;
    }
    const auto scores = entropy_scores(model, train_set, state.pool);
    const auto best = top_k(scores, config.per_step);
    std::vector<std::uint8_t> move(state.pool.size(), 0);
    for (std::size_t pos : best) move[pos] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t k = 0; k < state.pool.size(); ++k) (move[k] ? state.labeled : rest).push_back(state.pool[k]);
    state.pool = std::move(rest);
    std::sort(state.labeled.begin(), state.labeled.end());
    if (lap() > config.budget_seconds) break;
    ++state.acquisitions;
  }
  state.elapsed = lap();
  return state;
}

void write_trace_csv(std::ostream& os, const std::string& variant, const AcquisitionState& state, bool header) {
  if (header) os << "variant,round,wall_seconds,labeled_count,test_accuracy\n";
  os.precision(8);
  for (const auto& p : state.trace)
    os << variant << ',' << p.round << ',' << p.wall_seconds << ',' << p.labeled << ',' << p.test_accuracy << '\n';
}

template std::vector<double> entropy_scores<float>(const ModelGraph<float>&, const Dataset&,
                                                   std::span<const std::size_t>, std::size_t);
template std::vector<double> entropy_scores<double>(const ModelGraph<double>&, const Dataset&,
                                                    std::span<const std::size_t>, std::size_t);
template AcquisitionState acquisition_loop<float>(const ModelFactory<float>&, const Dataset&, const Dataset&,
                                                  const AcquisitionConfig&);
template AcquisitionState acquisition_loop<double>(const ModelFactory<double>&, const Dataset&, const Dataset&,
                                                   const AcquisitionConfig&);

}  // namespace chanprune
