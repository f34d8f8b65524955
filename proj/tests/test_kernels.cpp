#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>

#include "advbench/kernels.hpp"
#include "fd_check.hpp"

using namespace advbench;

namespace {

struct WorkerScope {
  explicit WorkerScope(int n) : saved(kernels::workers()) { kernels::set_workers(n); }
  ~WorkerScope() { kernels::set_workers(saved); }
  int saved;
};

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  return advbench::testing::random_tensor({n}, seed).data();
}

}  // namespace

TEST(Kernels, MatmulMatchesNaiveTripleLoop) {
  const std::size_t n = 5, k = 7, m = 3;
  const auto a = random_vec(n * k, 1), b = random_vec(k * m, 2);
  std::vector<double> c(n * m);
  kernels::matmul_serial(a, b, c, n, k, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
      EXPECT_NEAR(c[i * m + j], s, 1e-12);
    }
  }
}

TEST(Kernels, ParallelVariantsAreBitwiseIdenticalToSerial) {
  WorkerScope w(4);
  const std::size_t n = 67, k = 129, m = 33;
  const auto a = random_vec(n * k, 3), b = random_vec(k * m, 4), bt = random_vec(m * k, 5), g = random_vec(n * m, 6);
  std::vector<double> s(n * m), p(n * m);
  kernels::matmul_serial(a, b, s, n, k, m);
  kernels::matmul_parallel(a, b, p, n, k, m);
  EXPECT_EQ(s, p);

  std::vector<double> s2(n * m), p2(n * m);
  kernels::matmul_bt_serial(a, bt, s2, n, k, m);
  kernels::matmul_bt_parallel(a, bt, p2, n, k, m);
  EXPECT_EQ(s2, p2);

  std::vector<double> s3(k * m, 0.5), p3(k * m, 0.5);
  kernels::matmul_at_acc_serial(a, g, s3, n, k, m);
  kernels::matmul_at_acc_parallel(a, g, p3, n, k, m);
  EXPECT_EQ(s3, p3);
}

TEST(Kernels, ParallelForVisitsEveryIndexOnce) {
  WorkerScope w(3);
  std::vector<std::atomic<int>> hits(500);
  kernels::parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Kernels, ParallelForRethrowsWorkerExceptions) {
  WorkerScope w(3);
  EXPECT_THROW(kernels::parallel_for(100,
                                     [](std::size_t i) {
                                       if (i == 42) throw std::runtime_error("boom");
                                     }),
               std::runtime_error);
}
