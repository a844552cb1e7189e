#include "lotus/kernels.hpp"
#include "lotus/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace lotus;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    x = rng.uniform(-1.0, 1.0);
  }
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1.0 + std::abs(b[i])));
  }
}

struct Shape {
  std::size_t n, k, m;
};

const Shape kShapes[] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {64, 64, 64}, {100, 7, 130}};

} // namespace

TEST_CASE("parallel matmuls agree with the serial reference") {
  Rng rng(11);
  for (const auto& s : kShapes) {
    CAPTURE(s.n);
    CAPTURE(s.k);
    CAPTURE(s.m);
    const auto a = random_vec(rng, s.n * s.k);
    const auto b_nn = random_vec(rng, s.k * s.m);
    const auto b_nt = random_vec(rng, s.m * s.k);
    const auto a_tn = random_vec(rng, s.k * s.n);
    const auto c0 = random_vec(rng, s.n * s.m);

    auto fast = c0;
    auto ref = c0;
    kernels::matmul_nn(a.data(), b_nn.data(), fast.data(), s.n, s.k, s.m);
    kernels::reference::matmul_nn(a.data(), b_nn.data(), ref.data(), s.n, s.k, s.m);
    check_close(fast, ref);

    fast = ref = c0;
    kernels::matmul_nt(a.data(), b_nt.data(), fast.data(), s.n, s.k, s.m);
    kernels::reference::matmul_nt(a.data(), b_nt.data(), ref.data(), s.n, s.k, s.m);
    check_close(fast, ref);

    fast = ref = c0;
    kernels::matmul_tn(a_tn.data(), b_nn.data(), fast.data(), s.n, s.k, s.m);
    kernels::reference::matmul_tn(a_tn.data(), b_nn.data(), ref.data(), s.n, s.k, s.m);
    check_close(fast, ref);
  }
}

TEST_CASE("matmul_tn skips zero rows without changing the result") {
  Rng rng(2);
  auto a = random_vec(rng, 6 * 4);
  for (std::size_t i = 0; i < a.size(); i += 3) {
    a[i] = 0.0;
  }
  const auto b = random_vec(rng, 6 * 5);
  std::vector<double> fast(4 * 5, 0.0), ref(4 * 5, 0.0);
  kernels::matmul_tn(a.data(), b.data(), fast.data(), 4, 6, 5);
  kernels::reference::matmul_tn(a.data(), b.data(), ref.data(), 4, 6, 5);
  check_close(fast, ref);
}

TEST_CASE("softmax rows: normalization, masking and agreement with reference") {
  Rng rng(5);
  const std::size_t n = 40, m = 37;
  const auto x0 = random_vec(rng, n * m);
  std::vector<std::size_t> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    valid[i] = i % (m + 1);
  }
  auto fast = x0;
  auto ref = x0;
  kernels::softmax_rows(fast.data(), n, m, valid.data());
  kernels::reference::softmax_rows(ref.data(), n, m, valid.data());
  CHECK(fast == ref);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j >= valid[i]) {
        CHECK(fast[i * m + j] == 0.0);
      }
      sum += fast[i * m + j];
    }
    CHECK(sum == doctest::Approx(valid[i] == 0 ? 0.0 : 1.0).epsilon(1e-12));
  }

  std::vector<double> big{1000.0, 1001.0, 999.0};
  kernels::softmax_rows(big.data(), 1, 3, nullptr);
  CHECK(std::isfinite(big[0]));
  CHECK(big[1] > big[0]);
}
