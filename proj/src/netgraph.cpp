#include "chanprune/netgraph.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "chanprune/kernels.hpp"

namespace chanprune {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
  }
  throw Error("unknown layer kind");
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::Conv, LayerKind::BatchNorm, LayerKind::Relu, LayerKind::MaxPool, LayerKind::AvgPool,
                      LayerKind::Flatten, LayerKind::Linear}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t padding, bool prunable) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.in_units = cin;
  s.out_units = cout;
  s.kernel = kernel;
  s.padding = padding;
  s.prunable = prunable;
  s.original_units = cout;
  return s;
}

LayerSpec LayerSpec::linear(std::size_t fan_in, std::size_t units, bool prunable) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.in_units = fan_in;
  s.out_units = units;
  s.prunable = prunable;
  s.original_units = units;
  return s;
}

LayerSpec LayerSpec::batchnorm(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  s.in_units = s.out_units = channels;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.pool = window;
  return s;
}

LayerSpec LayerSpec::avgpool(std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::AvgPool;
  s.pool = out;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

// ---------------------------------------------------------------------------

std::size_t MaskSet::total_units() const {
  std::size_t n = 0;
  for (const auto& k : keep) n += k.size();
  return n;
}

std::size_t MaskSet::kept_units() const {
  std::size_t n = 0;
  for (std::size_t s = 0; s < keep.size(); ++s) n += kept_in(s);
  return n;
}

std::size_t MaskSet::kept_in(std::size_t slot) const {
  std::size_t n = 0;
  for (auto v : keep.at(slot)) n += v ? 1 : 0;
  return n;
}

std::optional<std::size_t> MaskSet::slot_of(std::size_t layer) const {
  for (std::size_t s = 0; s < layers.size(); ++s)
    if (layers[s] == layer) return s;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<ActivationShape> infer_shapes(const std::vector<LayerSpec>& layers, const ActivationShape& input) {
  std::vector<ActivationShape> shapes;
  shapes.reserve(layers.size());
  ActivationShape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    if (l.prunable && !l.has_weights()) throw ShapeError(where + "only conv/linear layers can be prunable");
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.flat) throw ShapeError(where + "conv after flatten");
        if (l.in_units != cur.channels) {
          throw ShapeError(where + "expects " + std::to_string(l.in_units) + " input channels, got " +
                           std::to_string(cur.channels));
        }
        if (l.out_units == 0 || l.kernel == 0 || l.stride == 0) throw ShapeError(where + "zero extent");
        if (l.kernel > cur.height + 2 * l.padding || l.kernel > cur.width + 2 * l.padding) {
          throw ShapeError(where + "kernel larger than padded input");
        }
        if ((cur.height + 2 * l.padding - l.kernel) % l.stride || (cur.width + 2 * l.padding - l.kernel) % l.stride) {
          throw ShapeError(where + "output extent is not exact");
        }
        cur = {l.out_units, (cur.height + 2 * l.padding - l.kernel) / l.stride + 1,
               (cur.width + 2 * l.padding - l.kernel) / l.stride + 1, false};
        break;
      }
      case LayerKind::BatchNorm:
        if (l.in_units != cur.channels || l.out_units != cur.channels) {
          throw ShapeError(where + "channel count " + std::to_string(l.in_units) + " does not match input " +
                           std::to_string(cur.channels));
        }
        break;
      case LayerKind::Relu: break;
      case LayerKind::MaxPool:
        if (cur.flat || l.pool == 0 || cur.height % l.pool || cur.width % l.pool) {
          throw ShapeError(where + "spatial extent not divisible by window");
        }
        cur.height /= l.pool;
        cur.width /= l.pool;
        break;
      case LayerKind::AvgPool:
        if (cur.flat || l.pool == 0 || cur.height % l.pool || cur.width % l.pool) {
          throw ShapeError(where + "cannot average-pool " + std::to_string(cur.height) + "x" +
                           std::to_string(cur.width) + " to " + std::to_string(l.pool));
        }
        cur.height = cur.width = l.pool;
        break;
      case LayerKind::Flatten: cur = {cur.size(), 1, 1, true}; break;
      case LayerKind::Linear:
        if (!cur.flat) throw ShapeError(where + "linear needs flattened input");
        if (l.in_units != cur.channels) {
          throw ShapeError(where + "expects " + std::to_string(l.in_units) + " features, got " +
                           std::to_string(cur.channels));
        }
        if (l.out_units == 0) throw ShapeError(where + "zero units");
        cur = {l.out_units, 1, 1, true};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

template <typename T>
ModelGraph<T>::ModelGraph(std::vector<LayerSpec> layers, ActivationShape input)
    : layers_(std::move(layers)), input_(input) {
  shapes_ = infer_shapes(layers_, input_);
  if (!layers_.empty()) {
    const LayerSpec& last = layers_.back();
    if (last.prunable) throw ShapeError("the final layer cannot be prunable");
  }
  params_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerSpec& l = layers_[i];
    if (l.original_units == 0) l.original_units = l.out_units;
    LayerParams<T>& p = params_[i];
    switch (l.kind) {
      case LayerKind::Conv:
        p.weight = Tensor<T>({l.out_units, l.in_units, l.kernel, l.kernel});
        p.bias = Tensor<T>({l.out_units});
        break;
      case LayerKind::Linear:
        p.weight = Tensor<T>({l.out_units, l.in_units});
        p.bias = Tensor<T>({l.out_units});
        break;
      case LayerKind::BatchNorm:
        p.gamma = Tensor<T>({l.out_units}, T{1});
        p.beta = Tensor<T>({l.out_units});
        p.running_mean.assign(l.out_units, T{0});
        p.running_var.assign(l.out_units, T{1});
        break;
      default: break;
    }
  }
}

template <typename T>
std::vector<std::size_t> ModelGraph<T>::prunable_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].prunable) out.push_back(i);
  return out;
}

template <typename T>
MaskSet ModelGraph<T>::ones_mask() const {
  MaskSet m;
  for (std::size_t i : prunable_layers()) {
    m.layers.push_back(i);
    m.keep.emplace_back(layers_[i].out_units, std::uint8_t{1});
  }
  return m;
}

template <typename T>
std::size_t ModelGraph<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size() + p.gamma.size() + p.beta.size();
  return n;
}

template <typename T>
void ModelGraph<T>::set_pruning_record(std::size_t layer, std::size_t original_units, std::vector<std::uint8_t> kept) {
  LayerSpec& l = layers_.at(layer);
  l.original_units = original_units;
  l.kept = std::move(kept);
}

template <typename T>
template <typename U>
ModelGraph<U> ModelGraph<T>::cast() const {
  ModelGraph<U> out(layers_, input_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const LayerParams<T>& src = params_[i];
    LayerParams<U>& dst = out.params()[i];
    if (!src.weight.empty()) dst.weight = src.weight.template cast<U>();
    if (!src.bias.empty()) dst.bias = src.bias.template cast<U>();
    if (!src.gamma.empty()) dst.gamma = src.gamma.template cast<U>();
    if (!src.beta.empty()) dst.beta = src.beta.template cast<U>();
    dst.running_mean.assign(src.running_mean.begin(), src.running_mean.end());
    dst.running_var.assign(src.running_var.begin(), src.running_var.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t scaled_width(std::size_t base, double multiplier) {
  const auto w = static_cast<std::size_t>(std::ceil(multiplier * static_cast<double>(base) - 1e-9));
  if (w == 0) throw ConfigError("width multiplier yields a zero-width layer");
  return w;
}

}  // namespace

template <typename T>
ModelGraph<T> build_vgg19(std::size_t num_classes, double width_multiplier, std::size_t in_channels,
                          std::size_t image_size) {
  if (!(width_multiplier > 0.0)) throw ConfigError("width multiplier must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  const std::size_t widths[5] = {64, 128, 256, 512, 512};
  const std::size_t depth[5] = {2, 2, 3, 3, 3};
  std::vector<LayerSpec> layers;
  std::size_t cin = in_channels;
  for (int b = 0; b < 5; ++b) {
    if (b > 0) layers.push_back(LayerSpec::maxpool(2));
    const std::size_t w = scaled_width(widths[b], width_multiplier);
    for (std::size_t d = 0; d < depth[b]; ++d) {
      layers.push_back(LayerSpec::conv(cin, w));
      layers.push_back(LayerSpec::batchnorm(w));
      layers.push_back(LayerSpec::relu());
      cin = w;
    }
  }
  layers.push_back(LayerSpec::avgpool(2));
  layers.push_back(LayerSpec::flatten());
  const std::size_t h1 = scaled_width(1024, width_multiplier), h2 = scaled_width(512, width_multiplier);
  layers.push_back(LayerSpec::linear(cin * 4, h1));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::linear(h1, h2));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::linear(h2, num_classes, false));
  return ModelGraph<T>(std::move(layers), {in_channels, image_size, image_size, false});
}

template <typename T>
ModelGraph<T> build_small_cnn(std::size_t num_classes, std::size_t in_channels, std::size_t image_size,
                              std::size_t width) {
  std::vector<LayerSpec> layers = {
      LayerSpec::conv(in_channels, width), LayerSpec::batchnorm(width), LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv(width, 2 * width),   LayerSpec::batchnorm(2 * width), LayerSpec::relu(),
      LayerSpec::avgpool(2),               LayerSpec::flatten(),
      LayerSpec::linear(2 * width * 4, 4 * width), LayerSpec::relu(),
      LayerSpec::linear(4 * width, num_classes, false),
  };
  return ModelGraph<T>(std::move(layers), {in_channels, image_size, image_size, false});
}

template <typename T>
ModelGraph<T> build_mlp(ActivationShape input, std::size_t hidden, std::size_t num_classes) {
  std::vector<LayerSpec> layers = {LayerSpec::flatten(), LayerSpec::linear(input.size(), hidden), LayerSpec::relu(),
                                   LayerSpec::linear(hidden, num_classes, false)};
  return ModelGraph<T>(std::move(layers), input);
}

template <typename T>
ModelGraph<T> build_preset(const std::string& name, std::size_t num_classes, double width_multiplier,
                           ActivationShape input) {
  if (name == "vgg19") return build_vgg19<T>(num_classes, width_multiplier, input.channels, input.height);
  if (name == "tiny-vgg") return build_vgg19<T>(num_classes, 0.25, input.channels, input.height);
  if (name == "small-cnn") {
    return build_small_cnn<T>(num_classes, input.channels, input.height, scaled_width(8, width_multiplier));
  }
  if (name == "mlp") return build_mlp<T>(input, scaled_width(64, width_multiplier), num_classes);
  throw ConfigError("unknown model preset '" + name + "'");
}

template <typename T>
void he_init(ModelGraph<T>& model, std::uint64_t seed) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerSpec& l = model.layer(i);
    LayerParams<T>& p = model.params()[i];
    if (l.has_weights()) {
      const double fan_in = static_cast<double>(l.kind == LayerKind::Conv ? l.in_units * l.kernel * l.kernel : l.in_units);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i)};
      std::mt19937_64 gen(seq);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (T& w : p.weight.data()) w = static_cast<T>(dist(gen));
      p.bias.fill(T{0});
    } else if (l.kind == LayerKind::BatchNorm) {
      p.gamma.fill(T{1});
      p.beta.fill(T{0});
      std::fill(p.running_mean.begin(), p.running_mean.end(), T{0});
      std::fill(p.running_var.begin(), p.running_var.end(), T{1});
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
ForwardPass<T> forward(const ModelGraph<T>& model, Tape<T>& tape, const Tensor<T>& batch,
                       const ForwardOptions& options) {
  const ActivationShape& in = model.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height || batch.dim(3) != in.width) {
    if (!(in.flat && batch.rank() == 2 && batch.dim(1) == in.channels)) {
      throw ShapeError("batch shape " + shape_string(batch.shape()) + " does not match model input");
    }
  }
  ++kernels::counters().forward_passes;

  const auto prunable = model.prunable_layers();
  const MaskSet* masks = options.masks;
  if (masks) {
    if (masks->layers != prunable || masks->keep.size() != prunable.size()) {
      throw ShapeError("mask set does not match the model's prunable layers");
    }
    for (std::size_t s = 0; s < prunable.size(); ++s) {
      if (masks->keep[s].size() != model.layer(prunable[s]).out_units) {
        throw ShapeError("mask length " + std::to_string(masks->keep[s].size()) + " does not match width " +
                         std::to_string(model.layer(prunable[s]).out_units) + " of layer " +
                         std::to_string(prunable[s]));
      }
    }
  }

  ForwardPass<T> pass;
  pass.params.resize(model.layers().size());
  pass.bn_stats.resize(model.layers().size());
  if (options.attach_masks) pass.masks.resize(prunable.size());

  const bool grads = options.param_grads;
  Var h = tape.constant(batch);
  std::vector<T> pending_gate;  // zero entries of the last masked layer, applied after its batchnorm
  std::size_t slot = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerSpec& l = model.layer(i);
    const LayerParams<T>& p = model.params()[i];
    ParamVars& pv = pass.params[i];
    std::vector<T> gate;
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Linear: {
        pv.weight = tape.leaf(p.weight, grads);
        pv.bias = tape.leaf(p.bias, grads);
        h = l.kind == LayerKind::Conv ? ops::conv2d(tape, h, pv.weight, pv.bias, l.padding, l.stride)
                                      : ops::linear(tape, h, pv.weight, pv.bias);
        if (l.prunable) {
          const auto* keep = masks ? &masks->keep[slot] : nullptr;
          bool any_zero = false;
          if (keep) {
            for (auto v : *keep) any_zero = any_zero || !v;
          }
          if (options.attach_masks) {
            Tensor<T> m({l.out_units}, T{1});
            if (keep) {
              for (std::size_t u = 0; u < l.out_units; ++u) m[u] = (*keep)[u] ? T{1} : T{0};
            }
            pass.masks[slot] = tape.leaf(std::move(m), true);
            h = ops::channel_scale(tape, h, pass.masks[slot]);
          } else if (any_zero) {
            gate.assign(keep->begin(), keep->end());
            h = ops::channel_gate<T>(tape, h, gate);
          }
          if (any_zero) gate.assign(keep->begin(), keep->end());
          ++slot;
        }
        break;
      }
      case LayerKind::BatchNorm: {
        pv.gamma = tape.leaf(p.gamma, grads);
        pv.beta = tape.leaf(p.beta, grads);
        h = ops::batchnorm(tape, h, pv.gamma, pv.beta, std::span<const T>(p.running_mean),
                           std::span<const T>(p.running_var), options.mode, T(kBatchNormEps),
                           options.mode == Mode::Train ? &pass.bn_stats[i] : nullptr);
        if (!pending_gate.empty()) h = ops::channel_gate<T>(tape, h, pending_gate);
        break;
      }
      case LayerKind::Relu: h = ops::relu(tape, h); break;
      case LayerKind::MaxPool: h = ops::maxpool2d(tape, h, l.pool); break;
      case LayerKind::AvgPool: h = ops::avgpool2d(tape, h, l.pool, l.pool); break;
      case LayerKind::Flatten: h = ops::flatten(tape, h); break;
    }
    pending_gate = std::move(gate);
  }
  pass.logits = h;
  return pass;
}

template <typename T>
ForwardPass<T> forward_masked(const ModelGraph<T>& model, Tape<T>& tape, const Tensor<T>& batch,
                              const MaskSet& masks, Mode mode) {
  ForwardOptions opt;
  opt.mode = mode;
  opt.attach_masks = true;
  opt.masks = &masks;
  return forward(model, tape, batch, opt);
}

template <typename T>
Tensor<T> predict(const ModelGraph<T>& model, const Tensor<T>& batch, const MaskSet* masks) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.mode = Mode::Eval;
  opt.masks = masks;
  opt.param_grads = false;
  auto pass = forward(model, tape, batch, opt);
  return tape.value(pass.logits);
}

template <typename T>
void commit_batchnorm_stats(ModelGraph<T>& model, const ForwardPass<T>& pass, T momentum) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (model.layer(i).kind != LayerKind::BatchNorm || pass.bn_stats[i].mean.empty()) continue;
    LayerParams<T>& p = model.params()[i];
    ops::update_running_stats(p.running_mean, p.running_var, pass.bn_stats[i], momentum);
  }
}

// ---------------------------------------------------------------------------
// serialization

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

std::string bitmap_string(const std::vector<std::uint8_t>& bits) {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

std::vector<std::uint8_t> bitmap_from_string(const std::string& s) {
  std::vector<std::uint8_t> bits;
  for (char c : s) {
    if (c != '0' && c != '1') throw ConfigError("kept bitmap must contain only 0/1");
    bits.push_back(c == '1');
  }
  return bits;
}

template <typename T>
struct NamedBuffer {
  std::string name;
  Shape shape;
  std::span<const T> values;
};

template <typename T>
std::vector<NamedBuffer<T>> named_buffers(const ModelGraph<T>& model) {
  std::vector<NamedBuffer<T>> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerParams<T>& p = model.params()[i];
    const std::string prefix = "layers." + std::to_string(i) + ".";
    auto add = [&](const char* name, const Tensor<T>& t) {
      if (!t.empty()) out.push_back({prefix + name, t.shape(), t.data()});
    };
    add("weight", p.weight);
    add("bias", p.bias);
    add("gamma", p.gamma);
    add("beta", p.beta);
    if (!p.running_mean.empty()) {
      out.push_back({prefix + "running_mean", {p.running_mean.size()}, p.running_mean});
      out.push_back({prefix + "running_var", {p.running_var.size()}, p.running_var});
    }
  }
  return out;
}

}  // namespace

template <typename T>
nlohmann::json architecture_json(const ModelGraph<T>& model) {
  using nlohmann::json;
  json doc;
  doc["format"] = "chanprune-model";
  doc["version"] = 1;
  doc["dtype"] = dtype_name<T>();
  const auto& in = model.input_shape();
  doc["input"] = {{"channels", in.channels}, {"height", in.height}, {"width", in.width}, {"flat", in.flat}};
  json layers = json::array();
  for (const LayerSpec& l : model.layers()) {
    json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::Conv:
        j["in_units"] = l.in_units;
        j["out_units"] = l.out_units;
        j["kernel"] = l.kernel;
        j["padding"] = l.padding;
        j["stride"] = l.stride;
        break;
      case LayerKind::Linear:
      case LayerKind::BatchNorm:
        j["in_units"] = l.in_units;
        j["out_units"] = l.out_units;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: j["pool"] = l.pool; break;
      default: break;
    }
    if (l.has_weights()) {
      j["prunable"] = l.prunable;
      j["mask_length"] = l.prunable ? l.out_units : 0;
      j["original_units"] = l.original_units;
      if (!l.kept.empty()) j["kept"] = bitmap_string(l.kept);
    }
    layers.push_back(std::move(j));
  }
  doc["layers"] = std::move(layers);
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& buf : named_buffers(model)) {
    manifest.push_back({{"name", buf.name}, {"shape", buf.shape}, {"offset", offset}, {"count", buf.values.size()}});
    offset += buf.values.size() * sizeof(T);
  }
  doc["parameters"] = std::move(manifest);
  doc["blob_bytes"] = offset;
  return doc;
}

template <typename T>
ModelGraph<T> model_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "chanprune-model") throw ConfigError("not a chanprune model document");
  const auto& jin = doc.at("input");
  ActivationShape input{jin.at("channels").get<std::size_t>(), jin.at("height").get<std::size_t>(),
                        jin.at("width").get<std::size_t>(), jin.value("flat", false)};
  std::vector<LayerSpec> layers;
  for (const auto& j : doc.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.in_units = j.value("in_units", std::size_t{0});
    l.out_units = j.value("out_units", std::size_t{0});
    l.kernel = j.value("kernel", std::size_t{0});
    l.padding = j.value("padding", std::size_t{0});
    l.stride = j.value("stride", std::size_t{1});
    l.pool = j.value("pool", std::size_t{0});
    l.prunable = j.value("prunable", false);
    l.original_units = j.value("original_units", l.out_units);
    if (j.contains("kept")) l.kept = bitmap_from_string(j.at("kept").get<std::string>());
    if (l.prunable && j.value("mask_length", l.out_units) != l.out_units) {
      throw ConfigError("mask_length does not match out_units");
    }
    layers.push_back(std::move(l));
  }
  return ModelGraph<T>(std::move(layers), input);
}

template <typename T>
std::size_t save_checkpoint(const ModelGraph<T>& model, const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto bin_path = stem;
  bin_path += ".bin";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto doc = architecture_json(model);
  {
    std::ofstream os(json_path);
    if (!os) throw Error("cannot write " + json_path.string());
    os << doc.dump(2) << '\n';
  }
  std::ofstream os(bin_path, std::ios::binary);
  if (!os) throw Error("cannot write " + bin_path.string());
  std::size_t bytes = 0;
  for (const auto& buf : named_buffers(model)) {
    os.write(reinterpret_cast<const char*>(buf.values.data()), static_cast<std::streamsize>(buf.values.size_bytes()));
    bytes += buf.values.size_bytes();
  }
  return bytes;
}

template <typename T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto bin_path = stem;
  bin_path += ".bin";
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open " + json_path.string());
  const auto doc = nlohmann::json::parse(js);
  if (doc.value("dtype", "") != dtype_name<T>()) {
    throw ConfigError("checkpoint dtype " + doc.value("dtype", std::string("?")) + " does not match requested " +
                      dtype_name<T>());
  }
  ModelGraph<T> model = model_from_json<T>(doc);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error("cannot open " + bin_path.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() != doc.at("blob_bytes").get<std::size_t>()) {
    throw ParseError("parameter blob size does not match manifest", blob.size());
  }
  const auto& manifest = doc.at("parameters");
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name");
    const std::size_t offset = entry.at("offset"), count = entry.at("count");
    const auto dot1 = name.find('.'), dot2 = name.find('.', dot1 + 1);
    const std::size_t layer = std::stoul(name.substr(dot1 + 1, dot2 - dot1 - 1));
    const std::string field = name.substr(dot2 + 1);
    LayerParams<T>& p = model.params().at(layer);
    T* dst = nullptr;
    std::size_t expected = 0;
    if (field == "weight") { dst = p.weight.ptr(); expected = p.weight.size(); }
    else if (field == "bias") { dst = p.bias.ptr(); expected = p.bias.size(); }
    else if (field == "gamma") { dst = p.gamma.ptr(); expected = p.gamma.size(); }
    else if (field == "beta") { dst = p.beta.ptr(); expected = p.beta.size(); }
    else if (field == "running_mean") { dst = p.running_mean.data(); expected = p.running_mean.size(); }
    else if (field == "running_var") { dst = p.running_var.data(); expected = p.running_var.size(); }
    if (!dst || expected != count || offset + count * sizeof(T) > blob.size()) {
      throw ParseError("manifest entry " + name + " does not fit the model", offset);
    }
    std::memcpy(dst, blob.data() + offset, count * sizeof(T));
  }
  return model;
}

#define CHANPRUNE_INSTANTIATE_NETGRAPH(T)                                                                          \
  template class ModelGraph<T>;                                                                                    \
  template ModelGraph<T> build_vgg19<T>(std::size_t, double, std::size_t, std::size_t);                            \
  template ModelGraph<T> build_small_cnn<T>(std::size_t, std::size_t, std::size_t, std::size_t);                   \
  template ModelGraph<T> build_mlp<T>(ActivationShape, std::size_t, std::size_t);                                  \
  template ModelGraph<T> build_preset<T>(const std::string&, std::size_t, double, ActivationShape);               \
  template void he_init<T>(ModelGraph<T>&, std::uint64_t);                                                         \
  template ForwardPass<T> forward<T>(const ModelGraph<T>&, Tape<T>&, const Tensor<T>&, const ForwardOptions&);    \
  template ForwardPass<T> forward_masked<T>(const ModelGraph<T>&, Tape<T>&, const Tensor<T>&, const MaskSet&,     \
                                            Mode);                                                                 \
  template Tensor<T> predict<T>(const ModelGraph<T>&, const Tensor<T>&, const MaskSet*);                          \
  template void commit_batchnorm_stats<T>(ModelGraph<T>&, const ForwardPass<T>&, T);                               \
  template nlohmann::json architecture_json<T>(const ModelGraph<T>&);                                             \
  template std::size_t save_checkpoint<T>(const ModelGraph<T>&, const std::filesystem::path&);                    \
  template ModelGraph<T> load_checkpoint<T>(const std::filesystem::path&);                                        \
  template ModelGraph<T> model_from_json<T>(const nlohmann::json&);

CHANPRUNE_INSTANTIATE_NETGRAPH(float)
CHANPRUNE_INSTANTIATE_NETGRAPH(double)

template ModelGraph<double> ModelGraph<float>::cast<double>() const;
template ModelGraph<float> ModelGraph<double>::cast<float>() const;
template ModelGraph<float> ModelGraph<float>::cast<float>() const;
template ModelGraph<double> ModelGraph<double>::cast<double>() const;

}  // namespace chanprune
