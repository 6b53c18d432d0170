#include <doctest.h>

#include <random>
#include <vector>

#include "chanprune/kernels.hpp"

using namespace chanprune;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("gemm: omp matches serial for all transpose combinations") {
    const std::size_t shapes[][3] = {{1, 1, 1}, {7, 13, 5}, {33, 70, 300}, {130, 9, 257}};
    for (auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      for (auto ta : {kernels::Trans::No, kernels::Trans::Yes}) {
        for (auto tb : {kernels::Trans::No, kernels::Trans::Yes}) {
          const auto a = randv(m * k, 1), b = randv(k * n, 2);
          auto c1 = randv(m * n, 3), c2 = c1;
          const std::size_t lda = ta == kernels::Trans::No ? k : m, ldb = tb == kernels::Trans::No ? n : k;
          kernels::serial::gemm(ta, tb, m, n, k, 0.5, a.data(), lda, b.data(), ldb, 2.0, c1.data(), n);
          kernels::omp::gemm(ta, tb, m, n, k, 0.5, a.data(), lda, b.data(), ldb, 2.0, c2.data(), n);
          CHECK(max_abs_diff(c1, c2) < 1e-11);
        }
      }
    }
  }

  TEST_CASE("gemm: beta 0 ignores garbage in C") {
    const auto a = randv(12, 4), b = randv(12, 5);
    std::vector<double> c1(9, std::nan("")), c2(9, std::nan(""));
    kernels::serial::gemm(kernels::Trans::No, kernels::Trans::No, 3, 3, 4, 1.0, a.data(), 4, b.data(), 3, 0.0,
                          c1.data(), 3);
    kernels::omp::gemm(kernels::Trans::No, kernels::Trans::No, 3, 3, 4, 1.0, a.data(), 4, b.data(), 3, 0.0,
                       c2.data(), 3);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(std::isfinite(c1[i]));
      CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("gemm counts multiply-accumulates") {
    const auto a = randv(6, 1), b = randv(6, 2);
    std::vector<double> c(4);
    kernels::CounterScope scope;
    kernels::omp::gemm(kernels::Trans::No, kernels::Trans::No, 2, 2, 3, 1.0, a.data(), 3, b.data(), 2, 0.0,
                       c.data(), 2);
    CHECK(scope.delta().macs == 12);
  }

  TEST_CASE("im2col and col2im: omp matches serial") {
    for (std::size_t stride : {1, 2}) {
      kernels::ConvGeometry g{3, 9, 9, 3, 1, stride};
      if ((g.height + 2 * g.padding - g.kernel) % stride) continue;
      const std::size_t count = 2, cols = count * g.out_height() * g.out_width();
      const auto img = randv(count * 3 * 81, 7);
      std::vector<double> c1(g.patch_size() * cols), c2(c1.size());
      kernels::serial::im2col(g, img.data(), count, c1.data());
      kernels::omp::im2col(g, img.data(), count, c2.data());
      CHECK(max_abs_diff(c1, c2) == 0.0);

      std::vector<double> i1(img.size(), 0.0), i2(img.size(), 0.0);
      kernels::serial::col2im(g, c1.data(), count, i1.data());
      kernels::omp::col2im(g, c1.data(), count, i2.data());
      CHECK(max_abs_diff(i1, i2) < 1e-12);
    }
  }

  TEST_CASE("col2im is the adjoint of im2col") {
    kernels::ConvGeometry g{2, 5, 6, 3, 1, 1};
    const std::size_t cols = g.out_height() * g.out_width();
    const auto x = randv(2 * 30, 11), y = randv(g.patch_size() * cols, 12);
    std::vector<double> ax(y.size()), aty(x.size(), 0.0);
    kernels::serial::im2col(g, x.data(), 1, ax.data());
    kernels::serial::col2im(g, y.data(), 1, aty.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += ax[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * aty[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("maxpool: omp matches serial, ties go to the first element") {
    std::vector<double> in = {1, 1, 1, 1};
    std::vector<double> out(1);
    std::vector<std::uint32_t> arg(1);
    kernels::serial::maxpool_forward(in.data(), 1, 2, 2, 2, out.data(), arg.data());
    CHECK(arg[0] == 0);

    const auto x = randv(3 * 8 * 8, 5);
    std::vector<double> o1(3 * 16), o2(3 * 16);
    std::vector<std::uint32_t> a1(o1.size()), a2(o1.size());
    kernels::serial::maxpool_forward(x.data(), 3, 8, 8, 2, o1.data(), a1.data());
    kernels::omp::maxpool_forward(x.data(), 3, 8, 8, 2, o2.data(), a2.data());
    CHECK(o1 == o2);
    CHECK(a1 == a2);
    std::vector<double> g1(x.size(), 0.0), g2(x.size(), 0.0);
    kernels::serial::maxpool_backward(o1.data(), a1.data(), 3, 8, 8, 2, g1.data());
    kernels::omp::maxpool_backward(o1.data(), a2.data(), 3, 8, 8, 2, g2.data());
    CHECK(g1 == g2);
  }
}
