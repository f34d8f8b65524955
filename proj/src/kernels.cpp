#include "advbench/kernels.hpp"

#include <algorithm>
#include <atomic>

namespace advbench::kernels {

namespace {

std::atomic<int> g_workers{1};

// Work threshold (multiply-adds) below which threading costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 17;

bool use_parallel(std::size_t rows, std::size_t work) {
  return g_workers.load() > 1 && rows > 1 && work >= kParallelWork && !omp_in_parallel();
}

inline void matmul_row(const double* a, const double* b, double* c, std::size_t k, std::size_t m) {
  std::fill(c, c + m, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    if (av == 0.0) continue;
    const double* brow = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
  }
}

inline void matmul_bt_row(const double* a, const double* b, double* c, std::size_t m, std::size_t k) {
  for (std::size_t q = 0; q < k; ++q) {
    const double* brow = b + q * m;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a[j] * brow[j];
    c[q] = s;
  }
}

inline void matmul_at_acc_row(const double* a, const double* b, double* c_row, std::size_t n, std::size_t k,
                              std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a[i * k + p];
    if (av == 0.0) continue;
    const double* brow = b + i * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * brow[j];
  }
}

}  // namespace

void set_workers(int n) { g_workers.store(std::max(1, n)); }

int workers() { return g_workers.load(); }

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                   std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void matmul_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                     std::size_t k, std::size_t m) {
  const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(workers())
  for (long long i = 0; i < rows; ++i) {
    matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
  }
}

void matmul_bt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                      std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) matmul_bt_row(a.data() + i * m, b.data(), c.data() + i * k, m, k);
}

void matmul_bt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                        std::size_t m, std::size_t k) {
  const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(workers())
  for (long long i = 0; i < rows; ++i) {
    matmul_bt_row(a.data() + i * m, b.data(), c.data() + i * k, m, k);
  }
}

void matmul_at_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                          std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) matmul_at_acc_row(a.data(), b.data(), c.data() + p * m, n, k, m, p);
}

void matmul_at_acc_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                            std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<long long>(k);
#pragma omp parallel for schedule(static) num_threads(workers())
  for (long long p = 0; p < rows; ++p) {
    matmul_at_acc_row(a.data(), b.data(), c.data() + p * m, n, k, m, static_cast<std::size_t>(p));
  }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n, std::size_t k,
            std::size_t m) {
  if (use_parallel(n, n * k * m)) {
    matmul_parallel(a, b, c, n, k, m);
  } else {
    matmul_serial(a, b, c, n, k, m);
  }
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
               std::size_t m, std::size_t k) {
  if (use_parallel(n, n * k * m)) {
    matmul_bt_parallel(a, b, c, n, m, k);
  } else {
    matmul_bt_serial(a, b, c, n, m, k);
  }
}

void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                   std::size_t k, std::size_t m) {
  if (use_parallel(k, n * k * m)) {
    matmul_at_acc_parallel(a, b, c, n, k, m);
  } else {
    matmul_at_acc_serial(a, b, c, n, k, m);
  }
}

}  // namespace advbench::kernels
