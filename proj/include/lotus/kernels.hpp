#pragma once

// Dense linear-algebra kernels used by the autodiff engine.
//
// Every kernel exists twice: a plain serial loop in `reference` that is kept
// as the test oracle, and an OpenMP version that parallelizes over output rows.
// Each output element is produced by exactly one thread with a fixed summation
// order, so the parallel kernels give identical results for any thread count.

#include <cstddef>

namespace lotus::kernels {

// C[n x m] += A[n x k] * B[k x m]
void matmul_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);
// C[n x m] += A[n x k] * B[m x k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);
// C[n x m] += A[k x n]^T * B[k x m]
void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);

// In-place numerically stable softmax over each row of x[n x m], restricted
// to the first `valid[i]` columns of row i; columns beyond are set to zero.
// A null `valid` means every column participates.
void softmax_rows(double* x, std::size_t n, std::size_t m, const std::size_t* valid);

namespace reference {

void matmul_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);
void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);
void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m);
void softmax_rows(double* x, std::size_t n, std::size_t m, const std::size_t* valid);

} // namespace reference

} // namespace lotus::kernels
