#include "chanprune/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "chanprune/kernels.hpp"

namespace chanprune::ops {

namespace k = chanprune::kernels;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Images per im2col chunk: enough columns to keep gemm efficient without a
// huge column buffer.
std::size_t conv_chunk(std::size_t batch, std::size_t out_plane) {
  const std::size_t target = 4096;
  return std::clamp<std::size_t>((target + out_plane - 1) / out_plane, 1, batch);
}

// Spatial elements per channel for [N,C,H,W] or [N,C].
std::size_t plane_of(const Shape& s) { return s.size() == 4 ? s[2] * s[3] : 1; }

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, std::size_t padding, std::size_t stride) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& w = tape.value(kernel);
  require(in.rank() == 4, "conv2d input must be [N,C,H,W], got " + shape_string(in.shape()));
  require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv2d kernel must be [Cout,Cin,K,K], got " + shape_string(w.shape()));
  require(stride >= 1, "conv2d stride must be >= 1");
  const std::size_t n = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t cout = w.dim(0), ks = w.dim(2);
  require(w.dim(1) == cin, "conv2d channel mismatch: input has " + std::to_string(cin) + ", kernel expects " +
                               std::to_string(w.dim(1)));
  require(ks <= h + 2 * padding && ks <= wd + 2 * padding, "conv2d kernel larger than padded input");
  require((h + 2 * padding - ks) % stride == 0 && (wd + 2 * padding - ks) % stride == 0,
          "conv2d output extent is not exact for stride " + std::to_string(stride));
  if (bias.valid()) {
    require(tape.value(bias).size() == cout, "conv2d bias length must equal Cout");
  }

  const k::ConvGeometry g{cin, h, wd, ks, padding, stride};
  const std::size_t oh = g.out_height(), ow = g.out_width(), plane = oh * ow, patch = g.patch_size();
  const std::size_t chunk = conv_chunk(n, plane);
  Tensor<T> out({n, cout, oh, ow});
  {
    std::vector<T> col(patch * chunk * plane), tmp(cout * chunk * plane);
    const T* bvals = bias.valid() ? tape.value(bias).ptr() : nullptr;
    for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
      const std::size_t cnt = std::min(chunk, n - n0), cols = cnt * plane;
      k::omp::im2col(g, in.ptr() + n0 * cin * h * wd, cnt, col.data());
      k::omp::gemm(k::Trans::No, k::Trans::No, cout, cols, patch, T{1}, w.ptr(), patch, col.data(), cols, T{0},
                   tmp.data(), cols);
      T* dst = out.ptr() + n0 * cout * plane;
#pragma omp parallel for schedule(static)
      for (std::size_t job = 0; job < cnt * cout; ++job) {
        const std::size_t img = job / cout, co = job % cout;
        const T b = bvals ? bvals[co] : T{0};
        const T* src = tmp.data() + co * cols + img * plane;
        T* o = dst + (img * cout + co) * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] = src[p] + b;
      }
    }
  }

  auto backward = [x, kernel, bias, g, n, cout, chunk](Tape<T>& t, const Tensor<T>& dout) {
    const Tensor<T>& in = t.value(x);
    const Tensor<T>& w = t.value(kernel);
    const std::size_t oh = g.out_height(), ow = g.out_width(), plane = oh * ow, patch = g.patch_size();
    const std::size_t in_image = g.channels * g.height * g.width;
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(kernel);
    const bool need_b = bias.valid() && t.requires_grad(bias);
    T* dx = need_x ? t.grad_buffer(x).ptr() : nullptr;
    T* dw = need_w ? t.grad_buffer(kernel).ptr() : nullptr;
    T* db = need_b ? t.grad_buffer(bias).ptr() : nullptr;
    std::vector<T> col(patch * chunk * plane), dtmp(cout * chunk * plane);
    for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
      const std::size_t cnt = std::min(chunk, n - n0), cols = cnt * plane;
      const T* src = dout.ptr() + n0 * cout * plane;
#pragma omp parallel for schedule(static)
      for (std::size_t job = 0; job < cnt * cout; ++job) {
        const std::size_t img = job / cout, co = job % cout;
        std::copy_n(src + (img * cout + co) * plane, plane, dtmp.data() + co * cols + img * plane);
      }
      if (db) {
        for (std::size_t co = 0; co < cout; ++co) {
          T acc{0};
          for (std::size_t c = 0; c < cols; ++c) acc += dtmp[co * cols + c];
          db[co] += acc;
        }
      }
      if (dw) {
        k::omp::im2col(g, in.ptr() + n0 * in_image, cnt, col.data());
        k::omp::gemm(k::Trans::No, k::Trans::Yes, cout, patch, cols, T{1}, dtmp.data(), cols, col.data(), cols, T{1},
                     dw, patch);
      }
      if (dx) {
        k::omp::gemm(k::Trans::Yes, k::Trans::No, patch, cols, cout, T{1}, w.ptr(), patch, dtmp.data(), cols, T{0},
                     col.data(), cols);
        k::omp::col2im(g, col.data(), cnt, dx + n0 * in_image);
      }
    }
  };
  if (bias.valid()) return tape.record(std::move(out), {x, kernel, bias}, backward, "conv2d");
  return tape.record(std::move(out), {x, kernel}, backward, "conv2d");
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& w = tape.value(weight);
  require(in.rank() == 2, "linear input must be [N,F], got " + shape_string(in.shape()));
  require(w.rank() == 2, "linear weight must be [U,F], got " + shape_string(w.shape()));
  const std::size_t n = in.dim(0), f = in.dim(1), u = w.dim(0);
  require(w.dim(1) == f, "linear fan-in mismatch: input has " + std::to_string(f) + " features, weight expects " +
                             std::to_string(w.dim(1)));
  if (bias.valid()) require(tape.value(bias).size() == u, "linear bias length must equal U");

  Tensor<T> out({n, u});
  k::omp::gemm(k::Trans::No, k::Trans::Yes, n, u, f, T{1}, in.ptr(), f, w.ptr(), f, T{0}, out.ptr(), u);
  if (bias.valid()) {
    const T* b = tape.value(bias).ptr();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < u; ++j) out[i * u + j] += b[j];
  }

  auto backward = [x, weight, bias, n, f, u](Tape<T>& t, const Tensor<T>& dout) {
    if (t.requires_grad(x)) {
      k::omp::gemm(k::Trans::No, k::Trans::No, n, f, u, T{1}, dout.ptr(), u, t.value(weight).ptr(), f, T{1},
                   t.grad_buffer(x).ptr(), f);
    }
    if (t.requires_grad(weight)) {
      k::omp::gemm(k::Trans::Yes, k::Trans::No, u, f, n, T{1}, dout.ptr(), u, t.value(x).ptr(), f, T{1},
                   t.grad_buffer(weight).ptr(), f);
    }
    if (bias.valid() && t.requires_grad(bias)) {
      T* db = t.grad_buffer(bias).ptr();
      for (std::size_t j = 0; j < u; ++j) {
        T acc{0};
        for (std::size_t i = 0; i < n; ++i) acc += dout[i * u + j];
        db[j] += acc;
      }
    }
  };
  if (bias.valid()) return tape.record(std::move(out), {x, weight, bias}, backward, "linear");
  return tape.record(std::move(out), {x, weight}, backward, "linear");
}

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, std::span<const T> running_mean,
              std::span<const T> running_var, Mode mode, T eps, BatchNormStats<T>* stats) {
  const Tensor<T>& in = tape.value(x);
  require(in.rank() == 4 || in.rank() == 2, "batchnorm input must be [N,C,H,W] or [N,C]");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = plane_of(in.shape());
  require(tape.value(gamma).size() == c && tape.value(beta).size() == c, "batchnorm gamma/beta length must equal C");
  const std::size_t count = n * plane;
  if (mode == Mode::Train && count < 2) {
    throw ShapeError("batchnorm train mode needs at least 2 elements per channel, got " + std::to_string(count));
  }
  if (mode == Mode::Eval) {
    require(running_mean.size() == c && running_var.size() == c, "batchnorm running stats length must equal C");
  }

  std::vector<T> mean(c), invstd(c), var(c);
  const T* src = in.ptr();
  if (mode == Mode::Train) {
#pragma omp parallel for schedule(static)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s{0};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) s += src[(i * c + ch) * plane + p];
      const T m = s / static_cast<T>(count);
      T v{0};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const T d = src[(i * c + ch) * plane + p] - m;
          v += d * d;
        }
      v /= static_cast<T>(count);
      mean[ch] = m;
      var[ch] = v;
      invstd[ch] = T{1} / std::sqrt(v + eps);
    }
    if (stats) *stats = BatchNormStats<T>{mean, var, count};
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = T{1} / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> out(in.shape());
  const T* gm = tape.value(gamma).ptr();
  const T* bt = tape.value(beta).ptr();
#pragma omp parallel for schedule(static)
  for (std::size_t job = 0; job < n * c; ++job) {
    const std::size_t ch = job % c;
    const T a = gm[ch] * invstd[ch], b = bt[ch] - mean[ch] * a;
    const T* s = src + job * plane;
    T* o = out.ptr() + job * plane;
    for (std::size_t p = 0; p < plane; ++p) o[p] = s[p] * a + b;
  }

  auto backward = [x, gamma, beta, mode, n, c, plane, count, mean = std::move(mean), invstd = std::move(invstd)](
                      Tape<T>& t, const Tensor<T>& dout) {
    const T* src = t.value(x).ptr();
    const T* gm = t.value(gamma).ptr();
    T* dx = t.requires_grad(x) ? t.grad_buffer(x).ptr() : nullptr;
    T* dg = t.requires_grad(gamma) ? t.grad_buffer(gamma).ptr() : nullptr;
    T* dbeta = t.requires_grad(beta) ? t.grad_buffer(beta).ptr() : nullptr;
#pragma omp parallel for schedule(static)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_dy{0}, sum_dy_xhat{0};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t idx = (i * c + ch) * plane + p;
          const T xhat = (src[idx] - mean[ch]) * invstd[ch];
          sum_dy += dout[idx];
          sum_dy_xhat += dout[idx] * xhat;
        }
      if (dg) dg[ch] += sum_dy_xhat;
      if (dbeta) dbeta[ch] += sum_dy;
      if (!dx) continue;
      const T scale = gm[ch] * invstd[ch];
      const T m = static_cast<T>(count);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t idx = (i * c + ch) * plane + p;
          if (mode == Mode::Train) {
            const T xhat = (src[idx] - mean[ch]) * invstd[ch];
            dx[idx] += scale / m * (m * dout[idx] - sum_dy - xhat * sum_dy_xhat);
          } else {
            dx[idx] += scale * dout[idx];
          }
        }
    }
  };
  return tape.record(std::move(out), {x, gamma, beta}, std::move(backward), "batchnorm");
}

template <typename T>
void update_running_stats(std::vector<T>& running_mean, std::vector<T>& running_var, const BatchNormStats<T>& stats,
                          T momentum) {
  const T unbias = stats.count > 1 ? static_cast<T>(stats.count) / static_cast<T>(stats.count - 1) : T{1};
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * stats.mean[c];
    running_var[c] = (T{1} - momentum) * running_var[c] + momentum * stats.variance[c] * unbias;
  }
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  const std::size_t size = in.size();
  const T* s = in.ptr();
  T* o = out.ptr();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < size; ++i) o[i] = s[i] > T{0} ? s[i] : T{0};
  return tape.record(
      std::move(out), {x},
      [x](Tape<T>& t, const Tensor<T>& dout) {
        const T* s = t.value(x).ptr();
        T* dx = t.grad_buffer(x).ptr();
        const std::size_t size = dout.size();
#pragma omp parallel for simd schedule(static)
        for (std::size_t i = 0; i < size; ++i) dx[i] += s[i] > T{0} ? dout[i] : T{0};
      },
      "relu");
}

template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, std::size_t window) {
  const Tensor<T>& in = tape.value(x);
  require(in.rank() == 4, "maxpool2d input must be [N,C,H,W]");
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  require(window >= 1 && h % window == 0 && w % window == 0,
          "maxpool2d: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
              " not divisible by window " + std::to_string(window));
  Tensor<T> out({n, c, h / window, w / window});
  std::vector<std::uint32_t> argmax(out.size());
  k::omp::maxpool_forward(in.ptr(), n * c, h, w, window, out.ptr(), argmax.data());
  return tape.record(
      std::move(out), {x},
      [x, n, c, h, w, window, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& dout) {
        k::omp::maxpool_backward(dout.ptr(), argmax.data(), n * c, h, w, window, t.grad_buffer(x).ptr());
      },
      "maxpool2d");
}

template <typename T>
Var avgpool2d(Tape<T>& tape, Var x, std::size_t out_h, std::size_t out_w) {
  const Tensor<T>& in = tape.value(x);
  require(in.rank() == 4, "avgpool2d input must be [N,C,H,W]");
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  require(out_h >= 1 && out_w >= 1 && h % out_h == 0 && w % out_w == 0,
          "avgpool2d: " + std::to_string(h) + "x" + std::to_string(w) + " does not divide into " +
              std::to_string(out_h) + "x" + std::to_string(out_w));
  const std::size_t wh = h / out_h, ww = w / out_w;
  const T inv = T{1} / static_cast<T>(wh * ww);
  Tensor<T> out({n, c, out_h, out_w});
  const T* s = in.ptr();
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t xo = 0; xo < out_w; ++xo) {
        T acc{0};
        for (std::size_t dy = 0; dy < wh; ++dy)
          for (std::size_t dx = 0; dx < ww; ++dx) acc += s[(p * h + y * wh + dy) * w + xo * ww + dx];
        out[(p * out_h + y) * out_w + xo] = acc * inv;
      }
  }
  return tape.record(
      std::move(out), {x},
      [x, n, c, h, w, out_h, out_w, wh, ww, inv](Tape<T>& t, const Tensor<T>& dout) {
        T* d = t.grad_buffer(x).ptr();
#pragma omp parallel for schedule(static)
        for (std::size_t p = 0; p < n * c; ++p)
          for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t xo = 0; xo < out_w; ++xo) {
              const T g = dout[(p * out_h + y) * out_w + xo] * inv;
              for (std::size_t dy = 0; dy < wh; ++dy)
                for (std::size_t dx = 0; dx < ww; ++dx) d[(p * h + y * wh + dy) * w + xo * ww + dx] += g;
            }
      },
      "avgpool2d");
}

template <typename T>
Var flatten(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  require(in.rank() >= 2, "flatten needs a batch dimension");
  const std::size_t n = in.dim(0);
  Tensor<T> out = in.reshaped({n, in.size() / n});
  return tape.record(
      std::move(out), {x},
      [x](Tape<T>& t, const Tensor<T>& dout) {
        Tensor<T>& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
      },
      "flatten");
}

template <typename T>
Var channel_scale(Tape<T>& tape, Var x, Var mask) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& m = tape.value(mask);
  require(in.rank() == 4 || in.rank() == 2, "channel_scale input must be [N,C,H,W] or [N,C]");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = plane_of(in.shape());
  require(m.size() == c, "mask length " + std::to_string(m.size()) + " does not match " + std::to_string(c) +
                             " channels");
  Tensor<T> out(in.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t job = 0; job < n * c; ++job) {
    const T f = m[job % c];
    for (std::size_t p = 0; p < plane; ++p) out[job * plane + p] = in[job * plane + p] * f;
  }
  return tape.record(
      std::move(out), {x, mask},
      [x, mask, n, c, plane](Tape<T>& t, const Tensor<T>& dout) {
        if (t.requires_grad(x)) {
          const T* m = t.value(mask).ptr();
          T* dx = t.grad_buffer(x).ptr();
#pragma omp parallel for schedule(static)
          for (std::size_t job = 0; job < n * c; ++job)
            for (std::size_t p = 0; p < plane; ++p) dx[job * plane + p] += dout[job * plane + p] * m[job % c];
        }
        if (t.requires_grad(mask)) {
          const T* s = t.value(x).ptr();
          T* dm = t.grad_buffer(mask).ptr();
#pragma omp parallel for schedule(static)
          for (std::size_t ch = 0; ch < c; ++ch) {
            T acc{0};
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t idx = (i * c + ch) * plane + p;
                acc += dout[idx] * s[idx];
              }
            dm[ch] += acc;
          }
        }
      },
      "channel_scale");
}

template <typename T>
Var channel_gate(Tape<T>& tape, Var x, std::span<const T> gate) {
  const Tensor<T>& in = tape.value(x);
  require(in.rank() == 4 || in.rank() == 2, "channel_gate input must be [N,C,H,W] or [N,C]");
  const std::size_t n = in.dim(0), c = in.dim(1), plane = plane_of(in.shape());
  require(gate.size() == c, "gate length does not match channel count");
  std::vector<T> g(gate.begin(), gate.end());
  Tensor<T> out(in.shape());
  for (std::size_t job = 0; job < n * c; ++job)
    for (std::size_t p = 0; p < plane; ++p) out[job * plane + p] = in[job * plane + p] * g[job % c];
  return tape.record(
      std::move(out), {x},
      [x, n, c, plane, g = std::move(g)](Tape<T>& t, const Tensor<T>& dout) {
        T* dx = t.grad_buffer(x).ptr();
        for (std::size_t job = 0; job < n * c; ++job)
          for (std::size_t p = 0; p < plane; ++p) dx[job * plane + p] += dout[job * plane + p] * g[job % c];
      },
      "channel_gate");
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits, T temperature) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<T> p(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * c;
    T mx = z[0] / temperature;
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[j] / temperature);
    T s{0};
    for (std::size_t j = 0; j < c; ++j) {
      p[i * c + j] = std::exp(z[j] / temperature - mx);
      s += p[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= s;
  }
  return p;
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels, T temperature) {
  const Tensor<T>& z = tape.value(logits);
  require(z.rank() == 2, "softmax_cross_entropy logits must be [N,C]");
  if (!(temperature > T{0})) throw Error("softmax temperature must be positive");
  const std::size_t n = z.dim(0), c = z.dim(1);
  require(labels.size() == n, "label count does not match batch size");
  if (!z.all_finite()) throw NumericalError("non-finite logits");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw Error("label " + std::to_string(y) + " out of range");
  }
  std::vector<T> prob(n * c);
  T loss{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = z.ptr() + i * c;
    T mx = row[0] / temperature;
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j] / temperature);
    T s{0};
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] / temperature - mx);
    const T log_s = std::log(s);
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(row[j] / temperature - mx - log_s);
    loss += log_s + mx - row[labels[i]] / temperature;
  }
  loss /= static_cast<T>(n);
  std::vector<int> y(labels.begin(), labels.end());
  return tape.record(
      Tensor<T>({1}, std::vector<T>{loss}), {logits},
      [logits, n, c, temperature, prob = std::move(prob), y = std::move(y)](Tape<T>& t, const Tensor<T>& dout) {
        T* dz = t.grad_buffer(logits).ptr();
        const T f = dout[0] / (static_cast<T>(n) * temperature);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const T onehot = static_cast<std::size_t>(y[i]) == j ? T{1} : T{0};
            dz[i * c + j] += f * (prob[i * c + j] - onehot);
          }
      },
      "softmax_cross_entropy");
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  require(va.shape() == vb.shape(), "add shape mismatch");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape<T>& t, const Tensor<T>& dout) {
        for (Var v : {a, b}) {
          if (!t.requires_grad(v)) continue;
          Tensor<T>& d = t.grad_buffer(v);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i];
        }
      },
      "add");
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  require(va.shape() == vb.shape(), "mul shape mismatch");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return tape.record(
      std::move(out), {a, b},
      [a, b](Tape<T>& t, const Tensor<T>& dout) {
        if (t.requires_grad(a)) {
          Tensor<T>& d = t.grad_buffer(a);
          const Tensor<T>& other = t.value(b);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i] * other[i];
        }
        if (t.requires_grad(b)) {
          Tensor<T>& d = t.grad_buffer(b);
          const Tensor<T>& other = t.value(a);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i] * other[i];
        }
      },
      "mul");
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor;
  return tape.record(
      std::move(out), {x},
      [x, factor](Tape<T>& t, const Tensor<T>& dout) {
        Tensor<T>& d = t.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i] * factor;
      },
      "scale");
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  T acc{0};
  for (T v : in.data()) acc += v;
  return tape.record(
      Tensor<T>({1}, std::vector<T>{acc}), {x},
      [x](Tape<T>& t, const Tensor<T>& dout) {
        Tensor<T>& d = t.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[0];
      },
      "sum");
}

#define CHANPRUNE_INSTANTIATE_OPS(T)                                                                               \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, std::size_t, std::size_t);                                      \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                                 \
  template Var batchnorm<T>(Tape<T>&, Var, Var, Var, std::span<const T>, std::span<const T>, Mode, T,             \
                            BatchNormStats<T>*);                                                                  \
  template void update_running_stats<T>(std::vector<T>&, std::vector<T>&, const BatchNormStats<T>&, T);           \
  template Var relu<T>(Tape<T>&, Var);                                                                             \
  template Var maxpool2d<T>(Tape<T>&, Var, std::size_t);                                                           \
  template Var avgpool2d<T>(Tape<T>&, Var, std::size_t, std::size_t);                                              \
  template Var flatten<T>(Tape<T>&, Var);                                                                          \
  template Var channel_scale<T>(Tape<T>&, Var, Var);                                                               \
  template Var channel_gate<T>(Tape<T>&, Var, std::span<const T>);                                                 \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const int>, T);                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                                         \
  template Var mul<T>(Tape<T>&, Var, Var);                                                                         \
  template Var scale<T>(Tape<T>&, Var, T);                                                                         \
  template Var sum<T>(Tape<T>&, Var);                                                                              \
  template std::vector<T> softmax_rows<T>(const Tensor<T>&, T);

CHANPRUNE_INSTANTIATE_OPS(float)
CHANPRUNE_INSTANTIATE_OPS(double)

}  // namespace chanprune::ops
