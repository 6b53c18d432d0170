#include "chanprune/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace chanprune {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("truncated IDX header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

Dataset concat(std::vector<Dataset> parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  const Shape& s = parts.front().images.shape();
  Dataset out;
  out.images = Tensor<float>({n, s[1], s[2], s[3]});
  out.num_classes = parts.front().num_classes;
  out.source = parts.front().source;
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.images.data().begin(), p.images.data().end(), out.images.ptr() + at);
    at += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

ChannelStats channel_stats(const Dataset& data) {
  const std::size_t n = data.images.dim(0), c = data.images.dim(1), plane = data.images.dim(2) * data.images.dim(3);
  ChannelStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = data.images.ptr() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum += p[k];
        sq += double(p[k]) * p[k];
      }
    }
    const double count = double(n * plane);
    stats.mean[ch] = sum / count;
    stats.stddev[ch] = std::sqrt(std::max(0.0, sq / count - stats.mean[ch] * stats.mean[ch]));
    if (stats.stddev[ch] == 0.0) stats.stddev[ch] = 1.0;
  }
  return stats;
}

void normalize(Dataset& data, const ChannelStats& stats) {
  if (data.normalized()) throw ConfigError("dataset is already normalized");
  const std::size_t n = data.images.dim(0), c = data.images.dim(1), plane = data.images.dim(2) * data.images.dim(3);
  if (stats.mean.size() != c || stats.stddev.size() != c) throw ShapeError("normalization stats do not match channels");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = data.images.ptr() + (i * c + ch) * plane;
      const double m = stats.mean[ch], s = stats.stddev[ch];
      for (std::size_t k = 0; k < plane; ++k) p[k] = static_cast<float>((p[k] - m) / s);
    }
  }
  data.mean = stats.mean;
  data.stddev = stats.stddev;
}

void denormalize(Dataset& data) {
  if (!data.normalized()) return;
  const std::size_t n = data.images.dim(0), c = data.images.dim(1), plane = data.images.dim(2) * data.images.dim(3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = data.images.ptr() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] = static_cast<float>(p[k] * data.stddev[ch] + data.mean[ch]);
    }
  }
  data.mean.clear();
  data.stddev.clear();
}

// ---------------------------------------------------------------------------

Dataset read_cifar10_batch(const std::filesystem::path& file) {
  constexpr std::size_t kRecord = 3073, kPixels = 3072;
  const auto bytes = read_file(file);
  if (bytes.empty()) throw ParseError(file.string() + ": empty file", 0);
  if (bytes.size() % kRecord) {
    throw ParseError(file.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                     bytes.size() - bytes.size() % kRecord);
  }
  const std::size_t n = bytes.size() / kRecord;
  Dataset out;
  out.images = Tensor<float>({n, 3, 32, 32});
  out.labels.resize(n);
  out.num_classes = 10;
  out.source = "cifar10";
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kRecord;
    if (rec[0] > 9) throw ParseError(file.string() + ": label byte " + std::to_string(rec[0]) + " > 9", i * kRecord);
    out.labels[i] = rec[0];
    float* dst = out.images.ptr() + i * kPixels;
    for (std::size_t k = 0; k < kPixels; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return out;
}

DatasetPair load_cifar10(const std::filesystem::path& dir) {
  std::filesystem::path root = dir;
  if (!std::filesystem::exists(root / "test_batch.bin") && std::filesystem::exists(dir / "cifar-10-batches-bin")) {
    root = dir / "cifar-10-batches-bin";
  }
  std::vector<Dataset> parts;
  for (int b = 1; b <= 5; ++b) parts.push_back(read_cifar10_batch(root / ("data_batch_" + std::to_string(b) + ".bin")));
  DatasetPair pair{concat(std::move(parts)), read_cifar10_batch(root / "test_batch.bin")};
  pair.train.split = "train";
  pair.test.split = "test";
  const auto stats = channel_stats(pair.train);
  normalize(pair.train, stats);
  normalize(pair.test, stats);
  return pair;
}

Dataset read_mnist(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t pad_to) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (read_be32(ib, 0) != 2051) throw ParseError(images.string() + ": bad image magic", 0);
  if (read_be32(lb, 0) != 2049) throw ParseError(labels.string() + ": bad label magic", 0);
  const std::size_t n = read_be32(ib, 4), rows = read_be32(ib, 8), cols = read_be32(ib, 12);
  const std::size_t nl = read_be32(lb, 4);
  if (n != nl) {
    throw ShapeError("MNIST images/labels count mismatch: " + std::to_string(n) + " vs " + std::to_string(nl));
  }
  if (n == 0 || rows == 0 || cols == 0) throw ParseError(images.string() + ": zero extent", 4);
  if (ib.size() < 16 + n * rows * cols) throw ParseError(images.string() + ": truncated pixel data", ib.size());
  if (lb.size() < 8 + n) throw ParseError(labels.string() + ": truncated label data", lb.size());
  if (pad_to < rows || pad_to < cols) throw ConfigError("pad_to smaller than the MNIST image");
  const std::size_t top = (pad_to - rows) / 2, left = (pad_to - cols) / 2;
  Dataset out;
  out.images = Tensor<float>({n, 1, pad_to, pad_to});
  out.labels.resize(n);
  out.num_classes = 10;
  out.source = "mnist";
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char label = lb[8 + i];
    if (label > 9) throw ParseError(labels.string() + ": label > 9", 8 + i);
    out.labels[i] = label;
    const unsigned char* src = ib.data() + 16 + i * rows * cols;
    float* dst = out.images.ptr() + i * pad_to * pad_to;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) dst[(r + top) * pad_to + c + left] = src[r * cols + c] / 255.0f;
  }
  return out;
}

DatasetPair load_mnist(const std::filesystem::path& dir, std::size_t pad_to) {
  DatasetPair pair{read_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", pad_to),
                   read_mnist(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", pad_to)};
  pair.train.split = "train";
  pair.test.split = "test";
  const auto stats = channel_stats(pair.train);
  normalize(pair.train, stats);
  normalize(pair.test, stats);
  return pair;
}

// ---------------------------------------------------------------------------

Dataset synthetic(const SyntheticConfig& cfg, std::uint64_t sample_seed) {
  if (cfg.classes == 0) throw ConfigError("synthetic data needs at least one class");
  if (cfg.n < cfg.classes) throw ConfigError("synthetic data needs n >= classes");
  if (cfg.grid == 0 || cfg.image_size == 0 || cfg.channels == 0) throw ConfigError("synthetic geometry must be positive");
  const std::size_t c = cfg.channels, s = cfg.image_size, g = cfg.grid, plane = s * s;

  // Prototypes: coarse Gaussian grids, bilinearly upsampled, unit RMS.
  std::vector<float> protos(cfg.classes * c * plane);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    auto gen = stream(cfg.seed, 0x70726f746fULL, k);
    std::normal_distribution<double> nd;
    std::vector<double> coarse(c * g * g);
    for (double& v : coarse) v = nd(gen);
    float* dst = protos.data() + k * c * plane;
    double sq = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < s; ++y) {
        // cell centres sit at (i + 0.5) * s / g; wrap so shifts stay smooth
        const double fy = (y + 0.5) * double(g) / double(s) - 0.5;
        const double y0 = std::floor(fy), ty = fy - y0;
        for (std::size_t x = 0; x < s; ++x) {
          const double fx = (x + 0.5) * double(g) / double(s) - 0.5;
          const double x0 = std::floor(fx), tx = fx - x0;
          auto at = [&](double yy, double xx) {
            const std::size_t iy = static_cast<std::size_t>((static_cast<long>(yy) % long(g) + long(g)) % long(g));
            const std::size_t ix = static_cast<std::size_t>((static_cast<long>(xx) % long(g) + long(g)) % long(g));
            return coarse[(ch * g + iy) * g + ix];
          };
          const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
          dst[ch * plane + y * s + x] = static_cast<float>(v);
          sq += v * v;
        }
      }
    }
    const double rms = std::sqrt(sq / double(c * plane));
    for (std::size_t i = 0; i < c * plane; ++i) dst[i] = static_cast<float>(dst[i] / rms);
  }

  Dataset out;
  out.images = Tensor<float>({cfg.n, c, s, s});
  out.labels.resize(cfg.n);
  out.num_classes = cfg.classes;
  out.source = "synthetic";
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t k = i % cfg.classes;
    out.labels[i] = static_cast<int>(k);
    auto gen = stream(sample_seed, 0x73616d706c65ULL, i);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<long> shift(-long(cfg.max_shift), long(cfg.max_shift));
    const long sy = shift(gen), sx = shift(gen);
    const float* proto = protos.data() + k * c * plane;
    float* dst = out.images.ptr() + i * c * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < s; ++y) {
        const std::size_t py = static_cast<std::size_t>(((long(y) - sy) % long(s) + long(s)) % long(s));
        for (std::size_t x = 0; x < s; ++x) {
          const std::size_t px = static_cast<std::size_t>(((long(x) - sx) % long(s) + long(s)) % long(s));
          dst[ch * plane + y * s + x] =
              static_cast<float>(cfg.margin * proto[ch * plane + py * s + px] + cfg.noise * nd(gen));
        }
      }
    }
  }
  return out;
}

DatasetPair synthetic_pair(const SyntheticConfig& config, std::size_t test_n) {
  SyntheticConfig test_cfg = config;
  test_cfg.n = test_n;
  DatasetPair pair{synthetic(config, config.seed * 2 + 1), synthetic(test_cfg, config.seed * 2 + 2)};
  pair.train.split = "train";
  pair.test.split = "test";
  const auto stats = channel_stats(pair.train);
  normalize(pair.train, stats);
  normalize(pair.test, stats);
  return pair;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("empty subset");
  const std::size_t per = data.images.size() / data.size();
  Shape shape = data.images.shape();
  shape[0] = indices.size();
  Dataset out;
  out.images = Tensor<float>(shape);
  out.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    if (i >= data.size()) throw ConfigError("subset index out of range");
    std::copy_n(data.images.ptr() + i * per, per, out.images.ptr() + j * per);
    out.labels.push_back(data.labels[i]);
  }
  out.num_classes = data.num_classes;
  out.mean = data.mean;
  out.stddev = data.stddev;
  out.split = data.split;
  out.source = data.source;
  return out;
}

// ---------------------------------------------------------------------------

AugmentDraw augment_draw(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  auto gen = stream(seed, epoch, index);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * kAugmentPad);
  AugmentDraw d;
  d.flip = std::bernoulli_distribution(0.5)(gen);
  d.dy = offset(gen);
  d.dx = offset(gen);
  return d;
}

void augment_image(const float* in, float* out, std::size_t channels, std::size_t height, std::size_t width,
                   const AugmentDraw& draw) {
  // Output pixel (y, x) reads padded pixel (y + dy, x + dx), i.e. source
  // (y + dy - pad, x + dx - pad), zero outside. Flip is applied first.
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = in + c * height * width;
    float* dst = out + c * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const long sy = long(y + draw.dy) - long(kAugmentPad);
      for (std::size_t x = 0; x < width; ++x) {
        const long sx = long(x + draw.dx) - long(kAugmentPad);
        float v = 0.0f;
        if (sy >= 0 && sy < long(height) && sx >= 0 && sx < long(width)) {
          const std::size_t col = draw.flip ? width - 1 - std::size_t(sx) : std::size_t(sx);
          v = src[std::size_t(sy) * width + col];
        }
        dst[y * width + x] = v;
      }
    }
  }
}

template <typename T>
Batch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices, const AugmentOptions* augment) {
  if (indices.empty()) throw ConfigError("empty batch");
  const std::size_t c = data.images.dim(1), h = data.images.dim(2), w = data.images.dim(3), per = c * h * w;
  Batch<T> batch;
  batch.images = Tensor<T>({indices.size(), c, h, w});
  batch.labels.reserve(indices.size());
  std::vector<float> scratch(augment ? per : 0);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    if (i >= data.size()) throw ConfigError("batch index out of range");
    const float* src = data.images.ptr() + i * per;
    if (augment) {
      augment_image(src, scratch.data(), c, h, w, augment_draw(augment->seed, augment->epoch, i));
      src = scratch.data();
    }
    std::copy_n(src, per, batch.images.ptr() + j * per);
    batch.labels.push_back(data.labels[i]);
  }
  return batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch) {
  if (n == 0) throw ConfigError("cannot batch an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto gen = stream(seed, 0x73687566ULL, epoch);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    batches.emplace_back(order.begin() + at, order.begin() + std::min(n, at + batch_size));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::vector<std::size_t> balanced_indices(const Dataset& data, std::size_t size, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(data.num_classes, 1));
  for (std::size_t i = 0; i < data.size(); ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
  auto gen = stream(seed, 0x62616c616e6365ULL);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), gen);
  std::vector<std::size_t> out;
  size = std::min(size, data.size());
  for (std::size_t round = 0; out.size() < size; ++round) {
    for (const auto& members : by_class) {
      if (round < members.size() && out.size() < size) out.push_back(members[round]);
    }
  }
  return out;
}

template Batch<float> make_batch<float>(const Dataset&, std::span<const std::size_t>, const AugmentOptions*);
template Batch<double> make_batch<double>(const Dataset&, std::span<const std::size_t>, const AugmentOptions*);

}  // namespace chanprune
