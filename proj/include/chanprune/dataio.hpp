#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chanprune/netgraph.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune {

/// Images [N,C,H,W] with labels. `mean`/`stddev` are the per-channel
/// statistics the images were normalized with (empty while still raw).
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::string split;
  std::string source;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  ActivationShape shape() const { return {images.dim(1), images.dim(2), images.dim(3), false}; }
  bool normalized() const { return !mean.empty(); }
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

ChannelStats channel_stats(const Dataset& data);

/// (x - mean) / stddev per channel; records the statistics in the handle.
void normalize(Dataset& data, const ChannelStats& stats);
/// Inverse of normalize; clears the recorded statistics.
void denormalize(Dataset& data);

/// One CIFAR-10 binary batch file: records of 1 label byte + 3072 pixel bytes
/// (R, G, B planes of 32x32), pixels scaled to [0,1].
Dataset read_cifar10_batch(const std::filesystem::path& file);

/// data_batch_1..5.bin and test_batch.bin from `dir` (or its
/// cifar-10-batches-bin subdirectory), normalized with train-split stats.
DatasetPair load_cifar10(const std::filesystem::path& dir);

/// IDX image/label pair; 28x28 digits are zero-padded to pad_to x pad_to.
Dataset read_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t pad_to = 32);

/// train-images-idx3-ubyte etc. from `dir`, normalized with train-split stats.
DatasetPair load_mnist(const std::filesystem::path& dir, std::size_t pad_to = 32);

/// Class prototypes are smooth random patterns (a coarse grid upsampled to
/// the image size); an example is margin * prototype, circularly shifted by up
/// to max_shift pixels, plus unit Gaussian pixel noise. Label i is i % classes.
struct SyntheticConfig {
  std::size_t classes = 10;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t channels = 3;
  std::size_t image_size = 32;
  std::size_t grid = 4;
  double margin = 1.0;
  double noise = 1.0;
  std::size_t max_shift = 0;
};

/// Raw (unnormalized) synthetic data. Prototypes depend only on
/// (seed, classes, geometry), so train and test sets drawn with different
/// `sample_seed` share them.
Dataset synthetic(const SyntheticConfig& config, std::uint64_t sample_seed);

/// Train/test pair from the same prototypes, normalized with train stats.
DatasetPair synthetic_pair(const SyntheticConfig& config, std::size_t test_n);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// augmentation and batching

struct AugmentDraw {
  bool flip = false;
  std::size_t dy = 4;  // crop offset into the 4-pixel padded image, [0, 8]
  std::size_t dx = 4;
};

inline constexpr std::size_t kAugmentPad = 4;

/// Random horizontal flip (p = 0.5) and crop offset; a pure function of
/// (seed, epoch, index).
AugmentDraw augment_draw(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

/// Applies one draw to a single image (C planes of H x W); `in` and `out`
/// must not alias.
void augment_image(const float* in, float* out, std::size_t channels, std::size_t height, std::size_t width,
                   const AugmentDraw& draw);

template <typename T>
struct Batch {
  Tensor<T> images;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

struct AugmentOptions {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
};

/// Gathers `indices` into a batch, augmenting each example when `augment` is set.
template <typename T>
Batch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices, const AugmentOptions* augment = nullptr);

/// Shuffled partition of [0, n) into batches of `batch_size` for one epoch.
/// A trailing batch of one example is merged into the previous batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch);

/// `size` indices drawn round-robin over classes (each class shuffled by the
/// seed); classes that run out are skipped.
std::vector<std::size_t> balanced_indices(const Dataset& data, std::size_t size, std::uint64_t seed);

}  // namespace chanprune
