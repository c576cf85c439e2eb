#pragma once

// Dense compute kernels behind the autograd ops.
//
// Every kernel exists twice: a plain serial reference in `serial` that follows
// the textbook loop nest, and an OpenMP version in `omp` with cache-friendly
// loop order that parallelises over an output dimension only. Reductions are
// never split across threads, so the OpenMP kernels are bitwise deterministic
// regardless of thread count. The autograd layer calls the `omp` versions; the
// serial ones are kept for tests and the benchmark.

#include <cstddef>
#include <span>

namespace neuronet::kernels {

struct Conv1dDims {
  std::size_t batch = 1;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t in_len = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_len() const { return (in_len + 2 * pad - kernel) / stride + 1; }
};

namespace serial {

// C[m,n] = A[m,k] B[k,n]   (C += ... when accumulate)
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
// C[m,n] = A[k,m]^T B[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
// C[m,n] = A[m,k] B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// x: [batch, in_ch, in_len], w: [out_ch, in_ch, kernel], y: [batch, out_ch, out_len]
void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
// gx += dL/dx
void conv1d_backward_input(const Conv1dDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
// gw += dL/dw, gb += dL/db (gb may be empty)
void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb);

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv1d_backward_input(const Conv1dDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb);

}  // namespace omp

int max_threads();

}  // namespace neuronet::kernels
