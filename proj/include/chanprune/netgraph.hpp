#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanprune/autodiff.hpp"
#include "chanprune/ops.hpp"

namespace chanprune {

using ops::Mode;

enum class LayerKind { Conv, BatchNorm, Relu, MaxPool, AvgPool, Flatten, Linear };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of a sequential model.
///
/// conv:      in_units = Cin, out_units = Cout, kernel/padding/stride
/// linear:    in_units = F,   out_units = U
/// batchnorm: in_units = out_units = C
/// maxpool:   window = pool (2 for VGG)
/// avgpool:   pool x pool output grid
///
/// Only conv and linear layers can be prunable; a prunable layer owns one
/// mask entry per output unit. `original_units` and `kept` record the layer
/// before surgery (kept is empty if the layer was never shrunk).
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t in_units = 0;
  std::size_t out_units = 0;
  std::size_t kernel = 0;
  std::size_t padding = 0;
  std::size_t stride = 1;
  std::size_t pool = 0;
  bool prunable = false;
  std::size_t original_units = 0;
  std::vector<std::uint8_t> kept;

  static LayerSpec conv(std::size_t cin, std::size_t cout, std::size_t kernel = 3, std::size_t padding = 1,
                        bool prunable = true);
  static LayerSpec linear(std::size_t fan_in, std::size_t units, bool prunable = true);
  static LayerSpec batchnorm(std::size_t channels);
  static LayerSpec relu();
  static LayerSpec maxpool(std::size_t window = 2);
  static LayerSpec avgpool(std::size_t out = 2);
  static LayerSpec flatten();

  bool has_weights() const { return kind == LayerKind::Conv || kind == LayerKind::Linear; }
};

/// Activation shape for one example: (C, H, W), or flat features (F, 1, 1).
struct ActivationShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  bool flat = false;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const ActivationShape&, const ActivationShape&) = default;
};

/// Per prunable layer: 1 = keep, 0 = prune.
struct MaskSet {
  std::vector<std::size_t> layers;
  std::vector<std::vector<std::uint8_t>> keep;

  std::size_t total_units() const;
  std::size_t kept_units() const;
  std::size_t pruned_units() const { return total_units() - kept_units(); }
  std::size_t kept_in(std::size_t slot) const;
  /// Slot holding `layer`, if the layer is prunable.
  std::optional<std::size_t> slot_of(std::size_t layer) const;
};

template <typename T>
struct LayerParams {
  Tensor<T> weight;  // conv [Cout,Cin,K,K], linear [U,F]
  Tensor<T> bias;    // [Cout] / [U]
  Tensor<T> gamma;   // batchnorm [C]
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

  std::size_t parameter_count() const {
    return weight.size() + bias.size() + gamma.size() + beta.size() + running_mean.size() + running_var.size();
  }
};

/// Sequential network: layer specs plus parameters. Shapes are validated on
/// construction; the structure is immutable afterwards, parameters are not.
template <typename T>
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(std::vector<LayerSpec> layers, ActivationShape input);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  std::vector<LayerParams<T>>& params() noexcept { return params_; }
  const std::vector<LayerParams<T>>& params() const noexcept { return params_; }
  const ActivationShape& input_shape() const noexcept { return input_; }

  /// Output shape of every layer for one example.
  const std::vector<ActivationShape>& output_shapes() const noexcept { return shapes_; }
  /// Input shape of layer i.
  ActivationShape input_of(std::size_t i) const { return i == 0 ? input_ : shapes_.at(i - 1); }

  std::vector<std::size_t> prunable_layers() const;
  MaskSet ones_mask() const;
  std::size_t num_classes() const { return shapes_.empty() ? 0 : shapes_.back().channels; }
  /// Trainable parameters (weights, biases, gamma, beta).
  std::size_t parameter_count() const;

  /// Used by surgery to record the pre-pruning structure.
  void set_pruning_record(std::size_t layer, std::size_t original_units, std::vector<std::uint8_t> kept);

  template <typename U>
  ModelGraph<U> cast() const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<LayerParams<T>> params_;
  ActivationShape input_;
  std::vector<ActivationShape> shapes_;
};

/// Shape inference over a layer list; throws ShapeError on inconsistency.
std::vector<ActivationShape> infer_shapes(const std::vector<LayerSpec>& layers, const ActivationShape& input);

// ---------------------------------------------------------------------------
// presets

/// VGG-19 for 32x32 inputs: five conv-BN-relu blocks (2,2,3,3,3 layers) of
/// widths ceil(multiplier * (64,128,256,512,512)) with 2x2 max pooling between
/// blocks, avgpool to 2x2, then linear layers ceil(multiplier*1024),
/// ceil(multiplier*512) and num_classes. Conv layers use padding 1, stride 1.
template <typename T>
ModelGraph<T> build_vgg19(std::size_t num_classes, double width_multiplier, std::size_t in_channels = 3,
                          std::size_t image_size = 32);

/// Two conv blocks + two linear layers for 8x8 inputs; used where tests need
/// many fast forward passes.
template <typename T>
ModelGraph<T> build_small_cnn(std::size_t num_classes, std::size_t in_channels = 3, std::size_t image_size = 8,
                              std::size_t width = 8);

/// flatten -> linear(hidden) -> relu -> linear(classes)
template <typename T>
ModelGraph<T> build_mlp(ActivationShape input, std::size_t hidden, std::size_t num_classes);

/// Named presets: "vgg19" (any width), "tiny-vgg" (vgg19 at 0.25),
/// "small-cnn" (8x8 inputs), "mlp".
template <typename T>
ModelGraph<T> build_preset(const std::string& name, std::size_t num_classes, double width_multiplier,
                           ActivationShape input);

/// Conv/linear weights ~ N(0, 2/fan_in) (fan_in = Cin*K^2 or F), biases 0,
/// gamma 1, beta 0, running stats (0, 1). Each layer draws from its own
/// stream seeded by (seed, layer index).
template <typename T>
void he_init(ModelGraph<T>& model, std::uint64_t seed);

// ---------------------------------------------------------------------------
// forward

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct ForwardOptions {
  Mode mode = Mode::Eval;
  /// Attach one mask leaf per prunable layer (from `masks`, or all ones when
  /// null) so backward yields dL/dmask.
  bool attach_masks = false;
  const MaskSet* masks = nullptr;
  /// Register parameters as gradient-requiring leaves.
  bool param_grads = true;
};

/// Tape handles of one layer's parameters (invalid when absent).
struct ParamVars {
  Var weight, bias, gamma, beta;
};

template <typename T>
struct ForwardPass {
  Var logits;
  std::vector<ParamVars> params;               // per layer
  std::vector<Var> masks;                      // per prunable slot, if attached
  std::vector<ops::BatchNormStats<T>> bn_stats;  // per layer, train mode only
};

/// Evaluates the model on `batch` ([N,C,H,W]). With masks attached, each
/// prunable layer's output is multiplied per unit by its mask right after the
/// affine op (before batchnorm). Units whose mask entry is 0 are additionally
/// hard-zeroed after the following batchnorm, so a masked unit contributes
/// exactly what a surgically removed unit would.
template <typename T>
ForwardPass<T> forward(const ModelGraph<T>& model, Tape<T>& tape, const Tensor<T>& batch,
                       const ForwardOptions& options = {});

/// forward_masked convenience: masks attached, parameter grads on.
template <typename T>
ForwardPass<T> forward_masked(const ModelGraph<T>& model, Tape<T>& tape, const Tensor<T>& batch,
                              const MaskSet& masks, Mode mode);

/// Logits only, eval mode, no gradient bookkeeping.
template <typename T>
Tensor<T> predict(const ModelGraph<T>& model, const Tensor<T>& batch, const MaskSet* masks = nullptr);

/// Applies the batch statistics of a train-mode pass to the model's running stats.
template <typename T>
void commit_batchnorm_stats(ModelGraph<T>& model, const ForwardPass<T>& pass, T momentum = T(kBatchNormMomentum));

// ---------------------------------------------------------------------------
// serialization

/// Architecture document: input shape, layer specs, mask lengths, pruning
/// record, and the manifest of the parameter blob.
template <typename T>
nlohmann::json architecture_json(const ModelGraph<T>& model);

/// Writes <stem>.json (architecture + manifest) and <stem>.bin (little-endian
/// parameters in manifest order). Returns the blob size in bytes.
template <typename T>
std::size_t save_checkpoint(const ModelGraph<T>& model, const std::filesystem::path& stem);

template <typename T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& stem);

/// Structure only (zero parameters) from an architecture document.
template <typename T>
ModelGraph<T> model_from_json(const nlohmann::json& doc);

}  // namespace chanprune
