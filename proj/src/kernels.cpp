#include "lotus/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lotus::kernels {

namespace {

// Below this many multiply-adds the fork/join cost outweighs the work.
constexpr std::size_t kParallelThreshold = 1 << 15;

inline bool worth_parallel(std::size_t n, std::size_t k, std::size_t m) {
  return n > 1 && n * k * m >= kParallelThreshold;
}

void softmax_row(double* row, std::size_t m, std::size_t valid) {
  valid = std::min(valid, m);
  if (valid == 0) {
    std::fill(row, row + m, 0.0);
    return;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < valid; ++j) {
    mx = std::max(mx, row[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < valid; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < valid; ++j) {
    row[j] *= inv;
  }
  std::fill(row + valid, row + m, 0.0);
}

} // namespace

void matmul_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (long i = 0; i < rows; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (long i = 0; i < rows; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += ai[p] * bj[p];
      }
      ci[j] += s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(n, k, m))
  for (long i = 0; i < rows; ++i) {
    double* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * n + i];
      if (av == 0.0) {
        continue;
      }
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void softmax_rows(double* x, std::size_t n, std::size_t m, const std::size_t* valid) {
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(n, 16, m))
  for (long i = 0; i < rows; ++i) {
    softmax_row(x + i * m, m, valid ? valid[i] : m);
  }
}

namespace reference {

void matmul_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += a[i * k + p] * b[p * m + j];
      }
      c[i * m + j] += s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += a[i * k + p] * b[j * k + p];
      }
      c[i * m + j] += s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += a[p * n + i] * b[p * m + j];
      }
      c[i * m + j] += s;
    }
  }
}

void softmax_rows(double* x, std::size_t n, std::size_t m, const std::size_t* valid) {
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(x + i * m, m, valid ? valid[i] : m);
  }
}

} // namespace reference

} // namespace lotus::kernels
