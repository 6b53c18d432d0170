#include "chanprune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace chanprune {

template <typename T>
double batch_loss(const ModelGraph<T>& model, const Batch<T>& batch, const MaskSet* masks, double temperature) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.mode = Mode::Eval;
  opt.masks = masks;
  opt.param_grads = false;
  auto pass = forward(model, tape, batch.images, opt);
  Var loss = ops::softmax_cross_entropy(tape, pass.logits, std::span<const int>(batch.labels), T(temperature));
  return double(tape.value(loss)[0]);
}

template <typename T>
double gradnorm_sq(const ModelGraph<T>& model, const Batch<T>& batch, const MaskSet* masks, double temperature) {
  double s = 0.0;
  for (T g : weight_gradient(model, batch, temperature, masks)) s += double(g) * double(g);
  return s;
}

namespace {

template <typename T>
MaskSet single_unit_mask(const ModelGraph<T>& model, std::size_t layer, std::size_t unit) {
  MaskSet m = model.ones_mask();
  const auto slot = m.slot_of(layer);
  if (!slot) throw ConfigError("layer " + std::to_string(layer) + " is not prunable");
  m.keep[*slot].at(unit) = 0;
  return m;
}

template <typename T>
ModelGraph<T> without_weight(const ModelGraph<T>& model, std::size_t layer, std::size_t index) {
  if (!model.layer(layer).has_weights()) throw ConfigError("layer " + std::to_string(layer) + " has no weights");
  ModelGraph<T> copy = model;
  auto w = copy.params()[layer].weight.data();
  if (index >= w.size()) throw ConfigError("weight index out of range");
  w[index] = T{0};
  return copy;
}

// offset of `layer`'s weights in the flat conv/linear weight vector
template <typename T>
std::size_t flat_offset(const ModelGraph<T>& model, std::size_t layer) {
  std::size_t at = 0;
  for (std::size_t i = 0; i < layer; ++i)
    if (model.layer(i).has_weights()) at += model.params()[i].weight.size();
  return at;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::size_t distinct(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
}

std::vector<double> min_max(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

}  // namespace

template <typename T>
double actual_delta_loss(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer, std::size_t unit) {
  const MaskSet m = single_unit_mask(model, layer, unit);
  return batch_loss(model, batch, &m) - batch_loss(model, batch);
}

template <typename T>
double actual_delta_loss_weight(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer,
                                std::size_t index) {
  return batch_loss(without_weight(model, layer, index), batch) - batch_loss(model, batch);
}

template <typename T>
double actual_delta_gradnorm(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer, std::size_t unit,
                             double temperature) {
  const MaskSet m = single_unit_mask(model, layer, unit);
  return gradnorm_sq(model, batch, &m, temperature) - gradnorm_sq(model, batch, nullptr, temperature);
}

template <typename T>
double actual_delta_gradnorm_weight(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer,
                                    std::size_t index, double temperature) {
  const ModelGraph<T> ablated = without_weight(model, layer, index);
  const auto g = weight_gradient(ablated, batch, temperature);
  double s = 0.0;
  for (T v : g) s += double(v) * double(v);
  const double own = double(g[flat_offset(model, layer) + index]);
  return s - own * own - gradnorm_sq(model, batch, nullptr, temperature);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2 || distinct(a) < 2 || distinct(b) < 2) {
    throw ConfigError("rank correlation needs at least two distinct values on each side");
  }
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = double(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  return sab / std::sqrt(saa * sbb);
}

Correlation rank_correlation(std::span<const AblationRecord> records) {
  if (records.size() < 10) throw ConfigError("rank correlation needs at least 10 records");
  std::vector<double> pred, act;
  for (const auto& r : records) {
    pred.push_back(r.predicted);
    act.push_back(r.actual);
  }
  Correlation c;
  c.n = records.size();
  c.rho = spearman(pred, act);
  const auto np = min_max(pred), na = min_max(act);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
  for (std::size_t k = 0; k < order.size(); ++k) c.rows.push_back({k, np[order[k]], na[order[k]]});
  return c;
}

template <typename T>
std::vector<AblationRecord> study_structured_loss(const ModelGraph<T>& model, const Batch<T>& batch,
                                                  const std::string& batch_id) {
  const ScoreSet g = score_3sp(model, batch, {.keep_sign = true});
  const double base = batch_loss(model, batch);
  std::vector<AblationRecord> out;
  MaskSet m = model.ones_mask();
  for (std::size_t s = 0; s < g.layers.size(); ++s) {
    for (std::size_t u = 0; u < g.values[s].size(); ++u) {
      m.keep[s][u] = 0;
      out.push_back({g.layers[s], u, -g.values[s][u], batch_loss(model, batch, &m) - base, batch_id});
      m.keep[s][u] = 1;
    }
  }
  return out;
}

template <typename T>
std::vector<AblationRecord> study_unstructured_loss(const ModelGraph<T>& model, const Batch<T>& batch,
                                                    std::size_t stride, const std::string& batch_id) {
  if (stride == 0) throw ConfigError("stride must be positive");
  const WeightScores s = score_snip_unstructured(model, batch, true);
  const double base = batch_loss(model, batch);
  std::vector<AblationRecord> out;
  ModelGraph<T> probe = model;
  std::size_t global = 0;
  for (std::size_t k = 0; k < s.layers.size(); ++k) {
    auto w = probe.params()[s.layers[k]].weight.data();
    for (std::size_t j = 0; j < s.values[k].size(); ++j, ++global) {
      if (global % stride) continue;
      const T saved = w[j];
      w[j] = T{0};
      out.push_back({s.layers[k], j, -s.values[k][j], batch_loss(probe, batch) - base, batch_id});
      w[j] = saved;
    }
  }
  return out;
}

template <typename T>
std::vector<AblationRecord> study_structured_gradnorm(const ModelGraph<T>& model, const Batch<T>& batch,
                                                      double temperature, std::size_t unit_stride,
                                                      const std::string& batch_id) {
  if (unit_stride == 0) throw ConfigError("stride must be positive");
  const ScoreSet s = score_grasp(model, batch, temperature, Granularity::Structured).structured;
  const double base = gradnorm_sq(model, batch, nullptr, temperature);
  std::vector<AblationRecord> out;
  MaskSet m = model.ones_mask();
  std::size_t global = 0;
  for (std::size_t k = 0; k < s.layers.size(); ++k) {
    for (std::size_t u = 0; u < s.values[k].size(); ++u, ++global) {
      if (global % unit_stride) continue;
      m.keep[k][u] = 0;
      out.push_back({s.layers[k], u, -2.0 * s.values[k][u], gradnorm_sq(model, batch, &m, temperature) - base,
                     batch_id});
      m.keep[k][u] = 1;
    }
  }
  return out;
}

template <typename T>
std::vector<PairRecord> additivity_pairs(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t pairs,
                                         std::uint64_t seed) {
  MaskSet m = model.ones_mask();
  const std::size_t total = m.total_units();
  if (total < 2) throw ConfigError("additivity needs at least two prunable units");
  std::vector<std::pair<std::size_t, std::size_t>> units;
  for (std::size_t s = 0; s < m.keep.size(); ++s)
    for (std::size_t u = 0; u < m.keep[s].size(); ++u) units.emplace_back(s, u);
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const double base = batch_loss(model, batch);
  auto delta = [&](std::initializer_list<std::pair<std::size_t, std::size_t>> off) {
    for (auto [s, u] : off) m.keep[s][u] = 0;
    const double d = batch_loss(model, batch, &m) - base;
    for (auto [s, u] : off) m.keep[s][u] = 1;
    return d;
  };
  std::vector<PairRecord> out;
  while (out.size() < pairs) {
    const std::size_t a = pick(gen), b = pick(gen);
    if (a == b) continue;
    const auto ua = units[a], ub = units[b];
    // a pair that empties a layer measures disconnection, not interaction
    if (ua.first == ub.first && m.keep[ua.first].size() == 2) continue;
    PairRecord r;
    r.layer_a = m.layers[ua.first];
    r.unit_a = ua.second;
    r.layer_b = m.layers[ub.first];
    r.unit_b = ub.second;
    r.delta_a = delta({ua});
    r.delta_b = delta({ub});
    r.delta_both = delta({ua, ub});
    out.push_back(r);
  }
  return out;
}

void write_records_csv(std::ostream& os, std::span<const AblationRecord> records) {
  os << "layer_index,unit_index,predicted,actual,batch_id\n";
  os.precision(10);
  for (const auto& r : records)
    os << r.layer << ',' << r.unit << ',' << r.predicted << ',' << r.actual << ',' << r.batch_id << '\n';
}

void write_calibration_csv(std::ostream& os, const Correlation& corr) {
  os << "rank,predicted_normalized,actual_normalized\n";
  os.precision(10);
  for (const auto& r : corr.rows) os << r.rank << ',' << r.predicted << ',' << r.actual << '\n';
}

void write_pairs_csv(std::ostream& os, std::span<const PairRecord> pairs) {
  os << "layer_a,unit_a,layer_b,unit_b,delta_a,delta_b,delta_both,interaction\n";
  os.precision(10);
  for (const auto& p : pairs) {
    os << p.layer_a << ',' << p.unit_a << ',' << p.layer_b << ',' << p.unit_b << ',' << p.delta_a << ','
       << p.delta_b << ',' << p.delta_both << ',' << p.interaction() << '\n';
  }
}

#define CHANPRUNE_INSTANTIATE_ORACLE(T)                                                                        \
  template double batch_loss<T>(const ModelGraph<T>&, const Batch<T>&, const MaskSet*, double);                \
  template double gradnorm_sq<T>(const ModelGraph<T>&, const Batch<T>&, const MaskSet*, double);               \
  template double actual_delta_loss<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t, std::size_t);       \
  template double actual_delta_loss_weight<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t, std::size_t); \
  template double actual_delta_gradnorm<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t, std::size_t,    \
                                           double);                                                            \
  template double actual_delta_gradnorm_weight<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t,          \
                                                  std::size_t, double);                                        \
  template std::vector<AblationRecord> study_structured_loss<T>(const ModelGraph<T>&, const Batch<T>&,         \
                                                                const std::string&);                           \
  template std::vector<AblationRecord> study_unstructured_loss<T>(const ModelGraph<T>&, const Batch<T>&,       \
                                                                  std::size_t, const std::string&);            \
  template std::vector<AblationRecord> study_structured_gradnorm<T>(const ModelGraph<T>&, const Batch<T>&,     \
                                                                    double, std::size_t, const std::string&);  \
  template std::vector<PairRecord> additivity_pairs<T>(const ModelGraph<T>&, const Batch<T>&, std::size_t,     \
                                                       std::uint64_t);

CHANPRUNE_INSTANTIATE_ORACLE(float)
CHANPRUNE_INSTANTIATE_ORACLE(double)

}  // namespace chanprune
