#include "neuronet/kernels.hpp"

#include <algorithm>
#include <cstdint>

#include <omp.h>

namespace neuronet::kernels {

namespace {

// Output positions t for which t*stride + k - pad lands inside [0, in_len).
struct ValidRange {
  std::size_t begin;
  std::size_t end;
};

ValidRange valid_range(const Conv1dDims& d, std::size_t k) {
  const auto out_len = static_cast<std::int64_t>(d.out_len());
  const auto s = static_cast<std::int64_t>(d.stride);
  const auto off = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(d.pad);
  const auto in_len = static_cast<std::int64_t>(d.in_len);
  // smallest t with t*s + off >= 0
  std::int64_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  // largest t with t*s + off <= in_len - 1
  std::int64_t hi = (in_len - 1 - off) >= 0 ? (in_len - 1 - off) / s + 1 : 0;
  lo = std::clamp<std::int64_t>(lo, 0, out_len);
  hi = std::clamp<std::int64_t>(hi, lo, out_len);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

std::ptrdiff_t shift(std::size_t k, std::size_t pad) {
  return static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t out_len = d.out_len();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_ch; ++co) {
      for (std::size_t t = 0; t < out_len; ++t) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const auto pos = static_cast<std::int64_t>(t * d.stride + k) -
                             static_cast<std::int64_t>(d.pad);
            if (pos < 0 || pos >= static_cast<std::int64_t>(d.in_len)) continue;
            acc += w[(co * d.in_ch + ci) * d.kernel + k] *
                   x[(b * d.in_ch + ci) * d.in_len + static_cast<std::size_t>(pos)];
          }
        }
        y[(b * d.out_ch + co) * out_len + t] = acc;
      }
    }
  }
}

void conv1d_backward_input(const Conv1dDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const std::size_t out_len = d.out_len();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_ch; ++co) {
      for (std::size_t t = 0; t < out_len; ++t) {
        const double g = gy[(b * d.out_ch + co) * out_len + t];
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const auto pos = static_cast<std::int64_t>(t * d.stride + k) -
                             static_cast<std::int64_t>(d.pad);
            if (pos < 0 || pos >= static_cast<std::int64_t>(d.in_len)) continue;
            gx[(b * d.in_ch + ci) * d.in_len + static_cast<std::size_t>(pos)] +=
                g * w[(co * d.in_ch + ci) * d.kernel + k];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb) {
  const std::size_t out_len = d.out_len();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.out_ch; ++co) {
      for (std::size_t t = 0; t < out_len; ++t) {
        const double g = gy[(b * d.out_ch + co) * out_len + t];
        if (!gb.empty()) gb[co] += g;
        for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const auto pos = static_cast<std::int64_t>(t * d.stride + k) -
                             static_cast<std::int64_t>(d.pad);
            if (pos < 0 || pos >= static_cast<std::int64_t>(d.in_len)) continue;
            gw[(co * d.in_ch + ci) * d.kernel + k] +=
                g * x[(b * d.in_ch + ci) * d.in_len + static_cast<std::size_t>(pos)];
          }
        }
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------

namespace omp {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[p * m + i];
      const double* brow = B + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      C[i * n + j] = accumulate ? C[i * n + j] + acc : acc;
    }
  }
}

void conv1d_forward(const Conv1dDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t out_len = d.out_len();
  const double* X = x.data();
  const double* W = w.data();
  double* Y = y.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t bb = 0; bb < static_cast<std::int64_t>(d.batch); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    for (std::size_t co = 0; co < d.out_ch; ++co) {
      double* yrow = Y + (b * d.out_ch + co) * out_len;
      std::fill(yrow, yrow + out_len, bias.empty() ? 0.0 : bias[co]);
      for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
        const double* xrow = X + (b * d.in_ch + ci) * d.in_len;
        const double* wrow = W + (co * d.in_ch + ci) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const auto [lo, hi] = valid_range(d, k);
          const double wv = wrow[k];
          if (d.stride == 1) {
            const double* xs = xrow + shift(k, d.pad);  // in range for t in [lo, hi)
#pragma omp simd
            for (std::size_t t = lo; t < hi; ++t) yrow[t] += wv * xs[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) yrow[t] += wv * xrow[t * d.stride + k - d.pad];
          }
        }
      }
    }
  }
}

void conv1d_backward_input(const Conv1dDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const std::size_t out_len = d.out_len();
  const double* GY = gy.data();
  const double* W = w.data();
  double* GX = gx.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t bb = 0; bb < static_cast<std::int64_t>(d.batch); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
      double* gxrow = GX + (b * d.in_ch + ci) * d.in_len;
      for (std::size_t co = 0; co < d.out_ch; ++co) {
        const double* gyrow = GY + (b * d.out_ch + co) * out_len;
        const double* wrow = W + (co * d.in_ch + ci) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const auto [lo, hi] = valid_range(d, k);
          const double wv = wrow[k];
          if (d.stride == 1) {
            double* gs = gxrow + shift(k, d.pad);
#pragma omp simd
            for (std::size_t t = lo; t < hi; ++t) gs[t] += wv * gyrow[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) gxrow[t * d.stride + k - d.pad] += wv * gyrow[t];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dDims& d, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb) {
  const std::size_t out_len = d.out_len();
  const double* X = x.data();
  const double* GY = gy.data();
  double* GW = gw.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t cc = 0; cc < static_cast<std::int64_t>(d.out_ch); ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double* gyrow = GY + (b * d.out_ch + co) * out_len;
      if (!gb.empty()) {
        double s = 0.0;
        for (std::size_t t = 0; t < out_len; ++t) s += gyrow[t];
        gb[co] += s;
      }
      for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
        const double* xrow = X + (b * d.in_ch + ci) * d.in_len;
        double* gwrow = GW + (co * d.in_ch + ci) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          const auto [lo, hi] = valid_range(d, k);
          double acc = 0.0;
          if (d.stride == 1) {
            const double* xs = xrow + shift(k, d.pad);
#pragma omp simd reduction(+ : acc)
            for (std::size_t t = lo; t < hi; ++t) acc += gyrow[t] * xs[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) acc += gyrow[t] * xrow[t * d.stride + k - d.pad];
          }
          gwrow[k] += acc;
        }
      }
    }
  }
}

}  // namespace omp

}  // namespace neuronet::kernels
