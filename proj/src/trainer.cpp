#include "chanprune/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace chanprune {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (!(decay > 0.0)) throw ConfigError("lr decay factor must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= epochs) throw ConfigError("milestones must be below the epoch count");
    if (i > 0 && milestones[i] <= milestones[i - 1]) throw ConfigError("milestones must be strictly increasing");
  }
  if (precision != "float32" && precision != "float64") throw ConfigError("precision must be float32 or float64");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"lr", lr},
          {"milestones", milestones}, {"decay", decay},
          {"momentum", momentum}, {"weight_decay", weight_decay},
          {"batch_size", batch_size}, {"seed", seed},
          {"augment", augment},   {"precision", precision}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  try {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.milestones = j.value("milestones", c.milestones);
  c.decay = j.value("decay", c.decay);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  c.precision = j.value("precision", c.precision);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  double lr = config.lr;
  for (std::size_t m : config.milestones)
    if (m <= epoch) lr *= config.decay;
  return lr;
}

nlohmann::json RunMetrics::to_json() const {
  nlohmann::json j;
  auto& arr = j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"lr", e.lr},
                   {"train_loss", e.train_loss},
                   {"train_accuracy", e.train_accuracy},
                   {"test_accuracy", e.test_accuracy ? nlohmann::json(*e.test_accuracy) : nlohmann::json(nullptr)},
                   {"seconds", e.seconds}});
  }
  j["final_accuracy"] = final_accuracy ? nlohmann::json(*final_accuracy) : nlohmann::json(nullptr);
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["steps"] = steps;
  return j;
}

void write_metrics_csv(std::ostream& os, const RunMetrics& metrics) {
  os << "epoch,train_loss,test_acc,epoch_seconds\n";
  os.precision(8);
  for (const auto& e : metrics.epochs) {
    os << e.epoch << ',' << e.train_loss << ',';
    if (e.test_accuracy) os << *e.test_accuracy;
    os << ',' << e.seconds << '\n';
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Sgd<T>::Sgd(const ModelGraph<T>& model, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.resize(model.layers().size());
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerParams<T>& p = model.params()[i];
    velocity_[i] = {std::vector<T>(p.weight.size()), std::vector<T>(p.bias.size()), std::vector<T>(p.gamma.size()),
                    std::vector<T>(p.beta.size())};
  }
}

template <typename T>
void Sgd<T>::step(ModelGraph<T>& model, const Tape<T>& tape, const ForwardPass<T>& pass, double lr) {
  const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    LayerParams<T>& p = model.params()[i];
    const ParamVars& vars = pass.params[i];
    Tensor<T>* tensors[4] = {&p.weight, &p.bias, &p.gamma, &p.beta};
    const Var handles[4] = {vars.weight, vars.bias, vars.gamma, vars.beta};
    for (int k = 0; k < 4; ++k) {
      if (tensors[k]->empty() || !handles[k].valid()) continue;
      const Tensor<T> g = tape.grad(handles[k]);
      auto w = tensors[k]->data();
      auto& v = velocity_[i][k];
      for (std::size_t j = 0; j < w.size(); ++j) {
        v[j] = mu * v[j] + g[j] + wd * w[j];
        w[j] -= rate * v[j];
      }
    }
  }
}

template <typename T>
double train_step(ModelGraph<T>& model, Sgd<T>& sgd, const Batch<T>& batch, double lr, std::size_t* correct) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.mode = Mode::Train;
  auto pass = forward(model, tape, batch.images, opt);
  Var loss = ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(batch.labels));
  const double value = double(tape.value(loss)[0]);
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss");
  tape.backward(loss);
  sgd.step(model, tape, pass, lr);
  commit_batchnorm_stats(model, pass);
  if (correct) {
    const Tensor<T>& logits = tape.value(pass.logits);
    const std::size_t classes = logits.dim(1);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const T* row = logits.ptr() + n * classes;
      const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
      *correct += arg == static_cast<std::size_t>(batch.labels[n]);
    }
  }
  return value;
}

namespace {

template <typename T>
void apply_weight_masks(ModelGraph<T>& model, const WeightMasks& masks) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layer(i).has_weights()) continue;
    if (k >= masks.size() || masks[k].size() != model.params()[i].weight.size()) {
      throw ShapeError("weight masks do not match the model");
    }
    auto w = model.params()[i].weight.data();
    for (std::size_t j = 0; j < w.size(); ++j)
      if (!masks[k][j]) w[j] = T{0};
    ++k;
  }
}

}  // namespace

template <typename T>
RunMetrics train(ModelGraph<T>& model, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (data.size() == 0) throw ConfigError("cannot train on an empty dataset");
  const ActivationShape in = model.input_shape();
  if (data.shape() != ActivationShape{in.channels, in.height, in.width, false}) {
    throw ShapeError("dataset shape does not match the model input");
  }
  RunMetrics metrics;
  metrics.momentum = config.momentum;
  metrics.weight_decay = config.weight_decay;
  Sgd<T> sgd(model, config.momentum, config.weight_decay);
  if (hooks.weight_masks) apply_weight_masks(model, *hooks.weight_masks);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(config, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    AugmentOptions aug{config.seed, epoch};
    try {
      for (const auto& idx : epoch_batches(data.size(), config.batch_size, config.seed, epoch)) {
        const Batch<T> batch = make_batch<T>(data, idx, config.augment ? &aug : nullptr);
        loss_sum += train_step(model, sgd, batch, rec.lr, &correct) * double(idx.size());
        if (hooks.weight_masks) apply_weight_masks(model, *hooks.weight_masks);
        ++metrics.steps;
      }
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    rec.seconds = seconds_since(start);
    rec.train_loss = loss_sum / double(data.size());
    rec.train_accuracy = double(correct) / double(data.size());
    if (hooks.test) {
      rec.test_accuracy = evaluate(model, *hooks.test);
      metrics.final_accuracy = rec.test_accuracy;
    }
    metrics.epochs.push_back(rec);
  }
  return metrics;
}

template <typename T>
double evaluate(const ModelGraph<T>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t at = 0; at < data.size(); at += batch_size) {
    idx.clear();
    for (std::size_t i = at; i < std::min(data.size(), at + batch_size); ++i) idx.push_back(i);
    const Batch<T> batch = make_batch<T>(data, idx);
    const Tensor<T> logits = predict(model, batch.images);
    const std::size_t classes = logits.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const T* row = logits.ptr() + n * classes;
      const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
      correct += arg == static_cast<std::size_t>(batch.labels[n]);
    }
  }
  return double(correct) / double(data.size());
}

template <typename T>
double time_epoch(const ModelGraph<T>& model, const Dataset& data, const TrainConfig& config, std::size_t warmup,
                  std::size_t measured) {
  if (measured == 0) throw ConfigError("time_epoch needs at least one measured epoch");
  if (data.size() == 0) throw ConfigError("cannot time an epoch of an empty dataset");
  TrainConfig cfg = config;
  cfg.epochs = warmup + measured;
  cfg.milestones.clear();
  ModelGraph<T> copy = model;
  const RunMetrics m = train(copy, data, cfg);
  double total = 0.0;
  for (std::size_t e = warmup; e < m.epochs.size(); ++e) total += m.epochs[e].seconds;
  return total / double(measured);
}

template <typename T>
double time_train_step(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t repeats) {
  ModelGraph<T> copy = model;
  Sgd<T> sgd(copy, 0.9, 5e-4);
  std::vector<double> times;
  train_step(copy, sgd, batch, 0.0);  // warm caches and allocator
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto start = Clock::now();
    train_step(copy, sgd, batch, 0.0);
    times.push_back(seconds_since(start));
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (a.n == 0) return a;
  for (double v : values) a.mean += v;
  a.mean /= double(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / double(a.n - 1));
    a.se = a.sd / std::sqrt(double(a.n));
  }
  return a;
}

#define CHANPRUNE_INSTANTIATE_TRAINER(T)                                                                     \
  template class Sgd<T>;                                                                                     \
  template double train_step<T>(ModelGraph<T>&, Sgd<T>&, const Batch<T>&, double, std::size_t*);            \
  template RunMetrics train<T>(ModelGraph<T>&, const Dataset&, const TrainConfig&, const TrainHooks&);       \
  template double evaluate<T>(const ModelGraph<T>&, const Dataset&, std::size_t);                            \
  template double time_epoch<T>(const ModelGraph<T>&, const Dataset&, const TrainConfig&, std::size_t,       \
                                std::size_t);                                                                \
  template double time_train_step<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t);

CHANPRUNE_INSTANTIATE_TRAINER(float)
CHANPRUNE_INSTANTIATE_TRAINER(double)

}  // namespace chanprune
