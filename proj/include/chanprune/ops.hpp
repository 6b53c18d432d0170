#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "chanprune/autodiff.hpp"

namespace chanprune::ops {

enum class Mode { Train, Eval };

/// Per-channel statistics of one train-mode batchnorm evaluation.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> variance;  // biased (divides by count)
  std::size_t count = 0;    // elements per channel, N*H*W
};

/// x [N,Cin,H,W], kernel [Cout,Cin,K,K], bias [Cout] or invalid Var for none.
/// Convolution is lowered to im2col + gemm in chunks of images.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, std::size_t padding, std::size_t stride);

/// x [N,F], weight [U,F], bias [U] (or invalid). out = x * weight^T + bias.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

/// x [N,C,H,W] or [N,C]. Train mode normalizes by batch statistics and, if
/// `stats` is non-null, reports them so the caller can update running stats.
template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, std::span<const T> running_mean,
              std::span<const T> running_var, Mode mode, T eps, BatchNormStats<T>* stats = nullptr);

/// running = (1 - momentum) * running + momentum * batch, unbiased variance.
template <typename T>
void update_running_stats(std::vector<T>& running_mean, std::vector<T>& running_var, const BatchNormStats<T>& stats,
                          T momentum);

template <typename T>
Var relu(Tape<T>& tape, Var x);

/// Non-overlapping window x window max pooling; ties go to the first element
/// in row-major order.
template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, std::size_t window = 2);

/// Average pooling down to out_h x out_w; H and W must divide evenly.
template <typename T>
Var avgpool2d(Tape<T>& tape, Var x, std::size_t out_h, std::size_t out_w);

/// [N, C, H, W] -> [N, C*H*W]
template <typename T>
Var flatten(Tape<T>& tape, Var x);

/// Multiplies channel c of x ([N,C,...]) by mask[c]; differentiable in both.
template <typename T>
Var channel_scale(Tape<T>& tape, Var x, Var mask);

/// Multiplies channel c by a constant gate[c]; no gradient flows to the gate.
template <typename T>
Var channel_gate(Tape<T>& tape, Var x, std::span<const T> gate);

/// Mean over the batch of -log softmax(logits / temperature)[label].
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels, T temperature = T{1});

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);
template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);
template <typename T>
Var sum(Tape<T>& tape, Var x);

/// Row-wise softmax(logits / temperature), no tape.
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits, T temperature = T{1});

}  // namespace chanprune::ops
