#include "chanprune/scoring.hpp"

#include <ostream>
#include <random>

namespace chanprune {

std::size_t ScoreSet::total() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

template <typename T>
std::vector<T> flat_weights(const ModelGraph<T>& model) {
  std::vector<T> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layer(i).has_weights()) continue;
    const auto w = model.params()[i].weight.data();
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

template <typename T>
void set_flat_weights(ModelGraph<T>& model, std::span<const T> values) {
  std::size_t at = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layer(i).has_weights()) continue;
    auto w = model.params()[i].weight.data();
    if (at + w.size() > values.size()) throw ShapeError("flat weight vector too short");
    std::copy_n(values.begin() + at, w.size(), w.begin());
    at += w.size();
  }
  if (at != values.size()) throw ShapeError("flat weight vector too long");
}

template <typename T>
std::vector<T> mask_gradient(const ModelGraph<T>& model, const Batch<T>& batch, double temperature,
                             const MaskSet* masks) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.mode = Mode::Eval;
  opt.attach_masks = true;
  opt.masks = masks;
  opt.param_grads = false;
  auto pass = forward(model, tape, batch.images, opt);
  Var loss = ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(batch.labels), T(temperature));
  tape.backward(loss);
  std::vector<T> out;
  for (Var m : pass.masks) {
    const auto g = tape.grad(m);
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

template <typename T>
std::vector<T> weight_gradient(const ModelGraph<T>& model, const Batch<T>& batch, double temperature,
                               const MaskSet* masks) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.mode = Mode::Eval;
  opt.masks = masks;
  auto pass = forward(model, tape, batch.images, opt);
  Var loss = ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(batch.labels), T(temperature));
  tape.backward(loss);
  std::vector<T> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layer(i).has_weights()) continue;
    const auto g = tape.grad(pass.params[i].weight);
    out.insert(out.end(), g.data().begin(), g.data().end());
  }
  return out;
}

namespace {

template <typename T>
ScoreSet unflatten(const ModelGraph<T>& model, const std::vector<T>& flat, std::string criterion) {
  ScoreSet s;
  s.criterion = std::move(criterion);
  s.layers = model.prunable_layers();
  std::size_t at = 0;
  for (std::size_t layer : s.layers) {
    const std::size_t n = model.layer(layer).out_units;
    s.values.emplace_back(flat.begin() + at, flat.begin() + at + n);
    at += n;
  }
  return s;
}

template <typename T>
WeightScores weight_scores(const ModelGraph<T>& model, const std::vector<T>& theta, const std::vector<T>& factor,
                           bool keep_sign) {
  WeightScores out;
  std::size_t at = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!model.layer(i).has_weights()) continue;
    const std::size_t n = model.params()[i].weight.size();
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double s = double(theta[at + k]) * double(factor[at + k]);
      v[k] = keep_sign ? s : std::abs(s);
    }
    out.layers.push_back(i);
    out.values.push_back(std::move(v));
    at += n;
  }
  return out;
}

void check_finite(const std::vector<std::vector<double>>& values, const char* what) {
  for (const auto& v : values)
    for (double x : v)
      if (!std::isfinite(x)) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

template <typename T>
ScoreSet score_3sp(const ModelGraph<T>& model, const Batch<T>& batch, const ScoreOptions& options) {
  const auto g = mask_gradient(model, batch);
  ScoreSet s = unflatten(model, g, "3sp");
  s.batch_size = batch.size();
  double total = 0.0;
  for (auto& layer : s.values) {
    for (double& v : layer) {
      if (!options.keep_sign) v = std::abs(v);
      total += std::abs(v);
    }
  }
  check_finite(s.values, "3SP score");
  if (options.normalize && total > 0.0) {
    for (auto& layer : s.values)
      for (double& v : layer) v /= total;
  }
  return s;
}

template <typename T>
WeightScores score_snip_unstructured(const ModelGraph<T>& model, const Batch<T>& batch, bool keep_sign) {
  const auto g = weight_gradient(model, batch);
  auto out = weight_scores(model, flat_weights(model), g, keep_sign);
  check_finite(out.values, "SNIP score");
  return out;
}

template <typename T>
GraspScores score_grasp(const ModelGraph<T>& model, const Batch<T>& batch, double temperature,
                        Granularity granularity) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  // the small FD step needs 64-bit gradients whatever the model precision
  const ModelGraph<double> m = model.template cast<double>();
  const Batch<double> b{batch.images.template cast<double>(), batch.labels};
  const std::vector<double> theta = flat_weights(m);
  const std::vector<double> g = weight_gradient(m, b, temperature);
  ModelGraph<double> probe = m;
  GraspScores out;
  if (granularity == Granularity::Unstructured) {
    const auto hg = fd_hessian_vector(theta, g, [&](const std::vector<double>& t) {
      set_flat_weights<double>(probe, t);
      return weight_gradient(probe, b, temperature);
    });
    out.unstructured = weight_scores(m, theta, hg, true);
    check_finite(out.unstructured.values, "GraSP score");
  } else {
    const auto hmg = fd_hessian_vector(theta, g, [&](const std::vector<double>& t) {
      set_flat_weights<double>(probe, t);
      return mask_gradient(probe, b, temperature);
    });
    out.structured = unflatten(m, hmg, "grasp-structured");
    out.structured.batch_size = batch.size();
    out.structured.temperature = temperature;
    check_finite(out.structured.values, "GraSP score");
  }
  return out;
}

ScoreSet retention_scores(const ScoreSet& scores, const CostTable& costs) {
  if (scores.layers != costs.layers) throw ShapeError("score set and cost table cover different layers");
  ScoreSet out = scores;
  out.criterion = scores.criterion + "-ca";
  out.lambda = costs.lambda;
  for (std::size_t s = 0; s < out.values.size(); ++s) {
    const double c = costs.normalized[s];
    if (!(c > 0.0)) throw ConfigError("normalized cost must be positive");
    for (double& v : out.values[s]) v = std::abs(v) / c;
  }
  return out;
}

template <typename T>
MaskSet uniform_mask(const ModelGraph<T>& model, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("uniform prune probability must be in [0, 1]");
  MaskSet m = model.ones_mask();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& layer : m.keep)
    for (auto& v : layer) v = u(gen) < p ? 0 : 1;
  return m;
}

void write_score_dump(std::ostream& os, const ScoreSet& raw, const CostTable& costs, const ScoreSet& retention,
                      const MaskSet& masks) {
  if (raw.layers != costs.layers || raw.layers != retention.layers || raw.layers != masks.layers) {
    throw ShapeError("score dump inputs cover different layers");
  }
  os << "layer_index,unit_index,raw_score,cost,retention_score,kept\n";
  os.precision(10);
  for (std::size_t s = 0; s < raw.layers.size(); ++s) {
    for (std::size_t u = 0; u < raw.values[s].size(); ++u) {
      os << raw.layers[s] << ',' << u << ',' << raw.values[s][u] << ',' << costs.raw[s] << ','
         << retention.values[s][u] << ',' << int(masks.keep[s][u]) << '\n';
    }
  }
}

#define CHANPRUNE_INSTANTIATE_SCORING(T)                                                                        \
  template std::vector<T> flat_weights<T>(const ModelGraph<T>&);                                                \
  template void set_flat_weights<T>(ModelGraph<T>&, std::span<const T>);                                        \
  template std::vector<T> mask_gradient<T>(const ModelGraph<T>&, const Batch<T>&, double, const MaskSet*);     \
  template std::vector<T> weight_gradient<T>(const ModelGraph<T>&, const Batch<T>&, double, const MaskSet*);   \
  template ScoreSet score_3sp<T>(const ModelGraph<T>&, const Batch<T>&, const ScoreOptions&);                  \
  template WeightScores score_snip_unstructured<T>(const ModelGraph<T>&, const Batch<T>&, bool);               \
  template GraspScores score_grasp<T>(const ModelGraph<T>&, const Batch<T>&, double, Granularity);             \
  template MaskSet uniform_mask<T>(const ModelGraph<T>&, double, std::uint64_t);

CHANPRUNE_INSTANTIATE_SCORING(float)
CHANPRUNE_INSTANTIATE_SCORING(double)

}  // namespace chanprune
