// Serial reference kernels vs their OpenMP counterparts on shapes that occur
// in the frame network and the transformer blocks.
//
//   bench_kernels [--reps N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "neuronet/kernels.hpp"

namespace k = neuronet::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void row(const char* name, const std::string& shape, double serial_ms, double omp_ms, double diff) {
  std::printf("%-24s %-28s %10.3f %10.3f %8.2fx %10.2e\n", name, shape.c_str(), serial_ms, omp_ms,
              serial_ms / omp_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--reps") == 0) reps = std::max(1, std::atoi(argv[i + 1]));
  std::mt19937_64 rng(7);
  std::printf("threads: %d, best of %d\n", k::max_threads(), reps);
  std::printf("%-24s %-28s %10s %10s %9s %10s\n", "kernel", "shape", "serial_ms", "omp_ms", "speedup", "max|diff|");

  struct G {
    std::size_t m, kk, n;
  };
  for (G g : {G{256, 64, 256}, G{2368, 64, 256}, G{512, 512, 512}}) {
    const auto a = random_vec(g.m * g.kk, rng), b = random_vec(g.kk * g.n, rng);
    std::vector<double> c1(g.m * g.n), c2(g.m * g.n);
    const std::string shape = std::to_string(g.m) + "x" + std::to_string(g.kk) + "x" + std::to_string(g.n);
    const double s = best_ms(reps, [&] { k::serial::gemm_nn(g.m, g.kk, g.n, a, b, c1, false); });
    const double o = best_ms(reps, [&] { k::omp::gemm_nn(g.m, g.kk, g.n, a, b, c2, false); });
    row("gemm_nn", shape, s, o, max_abs_diff(c1, c2));
    const auto bt = random_vec(g.n * g.kk, rng);
    const double s2 = best_ms(reps, [&] { k::serial::gemm_nt(g.m, g.kk, g.n, a, bt, c1, false); });
    const double o2 = best_ms(reps, [&] { k::omp::gemm_nt(g.m, g.kk, g.n, a, bt, c2, false); });
    row("gemm_nt", shape, s2, o2, max_abs_diff(c1, c2));
    const auto at = random_vec(g.kk * g.m, rng);
    const double s3 = best_ms(reps, [&] { k::serial::gemm_tn(g.m, g.kk, g.n, at, b, c1, false); });
    const double o3 = best_ms(reps, [&] { k::omp::gemm_tn(g.m, g.kk, g.n, at, b, c2, false); });
    row("gemm_tn", shape, s3, o3, max_abs_diff(c1, c2));
  }

  for (k::Conv1dDims d : {k::Conv1dDims{256, 1, 8, 300, 7, 2, 3}, k::Conv1dDims{256, 8, 8, 75, 5, 1, 2},
                          k::Conv1dDims{64, 64, 64, 75, 7, 1, 3}}) {
    const auto x = random_vec(d.batch * d.in_ch * d.in_len, rng);
    const auto w = random_vec(d.out_ch * d.in_ch * d.kernel, rng);
    const auto bias = random_vec(d.out_ch, rng);
    const std::size_t ny = d.batch * d.out_ch * d.out_len();
    std::vector<double> y1(ny), y2(ny);
    const std::string shape = "b" + std::to_string(d.batch) + " c" + std::to_string(d.in_ch) + "->" +
                              std::to_string(d.out_ch) + " L" + std::to_string(d.in_len) + " k" +
                              std::to_string(d.kernel);
    row("conv1d_forward", shape, best_ms(reps, [&] { k::serial::conv1d_forward(d, x, w, bias, y1); }),
        best_ms(reps, [&] { k::omp::conv1d_forward(d, x, w, bias, y2); }), max_abs_diff(y1, y2));

    const auto gy = random_vec(ny, rng);
    std::vector<double> gx1(x.size()), gx2(x.size());
    row("conv1d_backward_input", shape, best_ms(reps, [&] {
          std::fill(gx1.begin(), gx1.end(), 0.0);
          k::serial::conv1d_backward_input(d, gy, w, gx1);
        }),
        best_ms(reps, [&] {
          std::fill(gx2.begin(), gx2.end(), 0.0);
          k::omp::conv1d_backward_input(d, gy, w, gx2);
        }),
        max_abs_diff(gx1, gx2));

    std::vector<double> gw1(w.size()), gw2(w.size()), gb1(d.out_ch), gb2(d.out_ch);
    row("conv1d_backward_weight", shape, best_ms(reps, [&] {
          std::fill(gw1.begin(), gw1.end(), 0.0);
          std::fill(gb1.begin(), gb1.end(), 0.0);
          k::serial::conv1d_backward_weight(d, x, gy, gw1, gb1);
        }),
        best_ms(reps, [&] {
          std::fill(gw2.begin(), gw2.end(), 0.0);
          std::fill(gb2.begin(), gb2.end(), 0.0);
          k::omp::conv1d_backward_weight(d, x, gy, gw2, gb2);
        }),
        max_abs_diff(gw1, gw2));
  }
  return 0;
}
