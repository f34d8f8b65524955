#pragma once

// Dense linear-algebra kernels and the per-sample work loop.
//
// Each kernel has a serial reference and an OpenMP version. The OpenMP
// versions split work over output rows only, so every output element is
// summed in the same order as the serial reference and results are
// bitwise identical regardless of thread count.

#include <cstddef>
#include <exception>
#include <mutex>
#include <span>

#include <omp.h>

namespace advbench::kernels {

// Process-wide worker count for parallel regions (>= 1).
void set_workers(int n);
int workers();

// C[n x m] = A[n x k] * B[k x m]
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                   std::size_t k, std::size_t m);
void matmul_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                     std::size_t k, std::size_t m);

// C[n x k] = A[n x m] * B[k x m]^T
void matmul_bt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                      std::size_t m, std::size_t k);
void matmul_bt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                        std::size_t m, std::size_t k);

// C[k x m] += A[n x k]^T * B[n x m]
void matmul_at_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                          std::size_t k, std::size_t m);
void matmul_at_acc_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c,
                            std::size_t n, std::size_t k, std::size_t m);

// Dispatchers: use the OpenMP kernel when the problem is large enough and we
// are not already inside a parallel region.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n, std::size_t k,
            std::size_t m);
void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
               std::size_t m, std::size_t k);
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
                   std::size_t k, std::size_t m);

// Run body(i) for i in [0, n). The serial variant is the reference; the
// parallel one uses dynamic scheduling. The first exception thrown by any
// iteration is rethrown on the calling thread after the loop.
template <class Body>
void serial_for(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  if (workers() <= 1 || n <= 1 || omp_in_parallel()) {
    serial_for(n, body);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers())
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace advbench::kernels
