#include "chanprune/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

namespace chanprune::kernels {

Counters& counters() noexcept {
  thread_local Counters c;
  return c;
}

namespace {

template <typename T>
inline T element(Trans t, const T* base, std::size_t ld, std::size_t row, std::size_t col) {
  return t == Trans::No ? base[row * ld + col] : base[col * ld + row];
}

template <typename T>
void scale_c(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  if (beta == T{1}) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T{0}) {
      std::fill(row, row + n, T{0});
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  counters().macs += static_cast<std::uint64_t>(m) * n * k;
  scale_c(m, n, beta, c, ldc);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += element(ta, a, lda, i, p) * element(tb, b, ldb, p, j);
      c[i * ldc + j] += alpha * acc;
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* images, std::size_t count, T* col) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const std::size_t ncols = count * oh * ow;
  for (std::size_t img = 0; img < count; ++img) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* src = images + (img * g.channels + c) * plane;
      for (std::size_t kh = 0; kh < g.kernel; ++kh) {
        for (std::size_t kw = 0; kw < g.kernel; ++kw) {
          T* dst = col + ((c * g.kernel + kh) * g.kernel + kw) * ncols + img * oh * ow;
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - static_cast<std::ptrdiff_t>(g.padding);
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - static_cast<std::ptrdiff_t>(g.padding);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                  ix < static_cast<std::ptrdiff_t>(g.width);
              dst[y * ow + x] = inside ? src[iy * g.width + ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t count, T* images) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const std::size_t ncols = count * oh * ow;
  for (std::size_t img = 0; img < count; ++img) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      T* dst = images + (img * g.channels + c) * plane;
      for (std::size_t kh = 0; kh < g.kernel; ++kh) {
        for (std::size_t kw = 0; kw < g.kernel; ++kw) {
          const T* src = col + ((c * g.kernel + kh) * g.kernel + kw) * ncols + img * oh * ow;
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - static_cast<std::ptrdiff_t>(g.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - static_cast<std::ptrdiff_t>(g.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
              dst[iy * g.width + ix] += src[y * ow + x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const T* in, std::size_t planes, std::size_t height, std::size_t width, std::size_t window,
                     T* out, std::uint32_t* argmax) {
  const std::size_t oh = height / window, ow = width / window;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in + p * height * width;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (y * window) * width + x * window;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (y * window + dy) * width + x * window + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out[(p * oh + y) * ow + x] = src[best];
        argmax[(p * oh + y) * ow + x] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool_backward(const T* grad_out, const std::uint32_t* argmax, std::size_t planes, std::size_t height,
                      std::size_t width, std::size_t window, T* grad_in) {
  const std::size_t outs = (height / window) * (width / window);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t o = 0; o < outs; ++o) grad_in[p * height * width + argmax[p * outs + o]] += grad_out[p * outs + o];
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// blocked / OpenMP

namespace omp {
namespace {

template <typename T>
struct Blocking;

template <>
struct Blocking<float> {
  static constexpr std::size_t mr = 8, nr = 32, kc = 256, mc = 128, nc = 3072;
};

template <>
struct Blocking<double> {
  static constexpr std::size_t mr = 8, nr = 16, kc = 256, mc = 96, nc = 2048;
};

// A block (rows i0.., depth p0..) packed as MR-row panels, k-major inside a panel.
template <typename T>
void pack_a(Trans ta, const T* a, std::size_t lda, std::size_t i0, std::size_t rows, std::size_t p0,
            std::size_t depth, T* dst) {
  constexpr std::size_t MR = Blocking<T>::mr;
  for (std::size_t ir = 0; ir < rows; ir += MR) {
    const std::size_t mr = std::min(MR, rows - ir);
    for (std::size_t p = 0; p < depth; ++p) {
      for (std::size_t i = 0; i < MR; ++i) {
        *dst++ = i < mr ? element(ta, a, lda, i0 + ir + i, p0 + p) : T{0};
      }
    }
  }
}

template <typename T>
void pack_b(Trans tb, const T* b, std::size_t ldb, std::size_t p0, std::size_t depth, std::size_t j0,
            std::size_t cols, T* dst) {
  constexpr std::size_t NR = Blocking<T>::nr;
  for (std::size_t jr = 0; jr < cols; jr += NR) {
    const std::size_t nr = std::min(NR, cols - jr);
    for (std::size_t p = 0; p < depth; ++p) {
      if (tb == Trans::No && nr == NR) {
        std::memcpy(dst, b + (p0 + p) * ldb + j0 + jr, NR * sizeof(T));
        dst += NR;
        continue;
      }
      for (std::size_t j = 0; j < NR; ++j) *dst++ = j < nr ? element(tb, b, ldb, p0 + p, j0 + jr + j) : T{0};
    }
  }
}

template <typename T>
inline void micro_kernel(std::size_t depth, const T* __restrict ap, const T* __restrict bp, T* __restrict c,
                         std::size_t ldc, std::size_t mr, std::size_t nr, T alpha) {
  constexpr std::size_t MR = Blocking<T>::mr, NR = Blocking<T>::nr;
  alignas(64) T acc[MR][NR] = {};
  for (std::size_t p = 0; p < depth; ++p) {
    const T* av = ap + p * MR;
    const T* bv = bp + p * NR;
#pragma GCC unroll 8
    for (std::size_t i = 0; i < MR; ++i) {
      const T ai = av[i];
#pragma omp simd
      for (std::size_t j = 0; j < NR; ++j) acc[i][j] += ai * bv[j];
    }
  }
  for (std::size_t i = 0; i < mr; ++i) {
    T* row = c + i * ldc;
    for (std::size_t j = 0; j < nr; ++j) row[j] += alpha * acc[i][j];
  }
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using B = Blocking<T>;
  counters().macs += static_cast<std::uint64_t>(m) * n * k;
  scale_c(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0 || alpha == T{0}) return;

  const std::size_t nc_max = std::min(B::nc, (n + B::nr - 1) / B::nr * B::nr);
  const std::size_t kc_max = std::min(B::kc, k);
  std::vector<T> bpack(nc_max * kc_max);

  for (std::size_t jc = 0; jc < n; jc += B::nc) {
    const std::size_t cols = std::min(B::nc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += B::kc) {
      const std::size_t depth = std::min(B::kc, k - pc);
      pack_b(tb, b, ldb, pc, depth, jc, cols, bpack.data());
      const std::size_t mblocks = (m + B::mc - 1) / B::mc;
#pragma omp parallel
      {
        std::vector<T> apack(B::mc * depth);
#pragma omp for schedule(static)
        for (std::size_t blk = 0; blk < mblocks; ++blk) {
          const std::size_t ic = blk * B::mc;
          const std::size_t rows = std::min(B::mc, m - ic);
          pack_a(ta, a, lda, ic, rows, pc, depth, apack.data());
          for (std::size_t jr = 0; jr < cols; jr += B::nr) {
            const std::size_t nr = std::min(B::nr, cols - jr);
            const T* bp = bpack.data() + (jr / B::nr) * B::nr * depth;
            for (std::size_t ir = 0; ir < rows; ir += B::mr) {
              const std::size_t mr = std::min(B::mr, rows - ir);
              micro_kernel(depth, apack.data() + (ir / B::mr) * B::mr * depth, bp, c + (ic + ir) * ldc + jc + jr, ldc,
                           mr, nr, alpha);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* images, std::size_t count, T* col) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const std::size_t ncols = count * oh * ow;
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::size_t jobs = count * g.channels;
#pragma omp parallel for schedule(static)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t img = job / g.channels, c = job % g.channels;
    const T* src = images + (img * g.channels + c) * plane;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        T* dst = col + ((c * g.kernel + kh) * g.kernel + kw) * ncols + img * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
          T* out = dst + y * ow;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + ow, T{0});
            continue;
          }
          const T* row = src + iy * W;
          if (g.stride == 1) {
            // Valid x range where 0 <= x + kw - pad < W.
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kw) - pad;
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-off, 0, static_cast<std::ptrdiff_t>(ow));
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - off, lo, static_cast<std::ptrdiff_t>(ow));
            std::fill(out, out + lo, T{0});
            std::copy(row + lo + off, row + hi + off, out + lo);
            std::fill(out + hi, out + ow, T{0});
          } else {
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
              out[x] = (ix >= 0 && ix < W) ? row[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t count, T* images) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t plane = g.height * g.width;
  const std::size_t ncols = count * oh * ow;
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::size_t jobs = count * g.channels;
#pragma omp parallel for schedule(static)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t img = job / g.channels, c = job % g.channels;
    T* dst = images + (img * g.channels + c) * plane;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        const T* src = col + ((c * g.kernel + kh) * g.kernel + kw) * ncols + img * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
          if (iy < 0 || iy >= H) continue;
          T* row = dst + iy * W;
          const T* in = src + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
            if (ix >= 0 && ix < W) row[ix] += in[x];
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const T* in, std::size_t planes, std::size_t height, std::size_t width, std::size_t window,
                     T* out, std::uint32_t* argmax) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    serial::maxpool_forward(in + p * height * width, 1, height, width, window,
                            out + p * (height / window) * (width / window),
                            argmax + p * (height / window) * (width / window));
  }
}

template <typename T>
void maxpool_backward(const T* grad_out, const std::uint32_t* argmax, std::size_t planes, std::size_t height,
                      std::size_t width, std::size_t window, T* grad_in) {
  const std::size_t outs = (height / window) * (width / window);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    serial::maxpool_backward(grad_out + p * outs, argmax + p * outs, 1, height, width, window,
                             grad_in + p * height * width);
  }
}

}  // namespace omp

#define CHANPRUNE_INSTANTIATE_KERNELS(NS, T)                                                                       \
  template void NS::gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t,         \
                            const T*, std::size_t, T, T*, std::size_t);                                            \
  template void NS::im2col<T>(const ConvGeometry&, const T*, std::size_t, T*);                                     \
  template void NS::col2im<T>(const ConvGeometry&, const T*, std::size_t, T*);                                     \
  template void NS::maxpool_forward<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t, T*,           \
                                       std::uint32_t*);                                                            \
  template void NS::maxpool_backward<T>(const T*, const std::uint32_t*, std::size_t, std::size_t, std::size_t,     \
                                        std::size_t, T*);

CHANPRUNE_INSTANTIATE_KERNELS(serial, float)
CHANPRUNE_INSTANTIATE_KERNELS(serial, double)
CHANPRUNE_INSTANTIATE_KERNELS(omp, float)
CHANPRUNE_INSTANTIATE_KERNELS(omp, double)

}  // namespace chanprune::kernels
