#pragma once

// Dense compute kernels. Every kernel exists twice: `serial::` is a plain
// loop nest kept as the reference for tests and benchmarks, `omp::` is the
// blocked, OpenMP-parallel version used by the engine. Parallel kernels split
// work only over output elements, so results do not depend on thread count.

#include <cstddef>
#include <cstdint>

namespace chanprune::kernels {

enum class Trans { No, Yes };

/// Geometry of one convolution input image (C x H x W) and its kernel window.
struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t padding = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  std::size_t patch_size() const { return channels * kernel * kernel; }
};

// C = alpha * op(A) * op(B) + beta * C, row-major. op(A) is m x k, op(B) is k x n.
// im2col writes `count` images into a [C*K*K, count*H'*W'] matrix; col2im
// adds such a matrix back into the images.
// maxpool works on `planes` independent H x W planes with a `window` x
// `window` non-overlapping window; argmax holds the flat in-plane index of
// the first maximum in row-major scan order.

namespace serial {
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);
template <typename T>
void im2col(const ConvGeometry& g, const T* images, std::size_t count, T* col);
template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t count, T* images);
template <typename T>
void maxpool_forward(const T* in, std::size_t planes, std::size_t height, std::size_t width, std::size_t window,
                     T* out, std::uint32_t* argmax);
template <typename T>
void maxpool_backward(const T* grad_out, const std::uint32_t* argmax, std::size_t planes, std::size_t height,
                      std::size_t width, std::size_t window, T* grad_in);
}  // namespace serial

namespace omp {
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);
template <typename T>
void im2col(const ConvGeometry& g, const T* images, std::size_t count, T* col);
template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t count, T* images);
template <typename T>
void maxpool_forward(const T* in, std::size_t planes, std::size_t height, std::size_t width, std::size_t window,
                     T* out, std::uint32_t* argmax);
template <typename T>
void maxpool_backward(const T* grad_out, const std::uint32_t* argmax, std::size_t planes, std::size_t height,
                      std::size_t width, std::size_t window, T* grad_in);
}  // namespace omp

/// Per-thread instrumentation. `macs` counts multiply-accumulates issued by
/// gemm (both variants); the pass counters are bumped by the model forward and
/// by Tape::backward.
struct Counters {
  std::uint64_t macs = 0;
  std::uint64_t forward_passes = 0;
  std::uint64_t backward_passes = 0;
};

Counters& counters() noexcept;

/// Snapshot of the counters; `delta()` is what happened since construction.
class CounterScope {
 public:
  CounterScope() : start_(counters()) {}
  Counters delta() const {
    const Counters& now = counters();
    return {now.macs - start_.macs, now.forward_passes - start_.forward_passes,
            now.backward_passes - start_.backward_passes};
  }

 private:
  Counters start_;
};

}  // namespace chanprune::kernels
