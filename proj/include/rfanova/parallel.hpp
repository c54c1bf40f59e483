#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rfanova {

/// kSerial is the reference path; kParallel runs the same loop body under
/// OpenMP. Bodies write to disjoint slots and callers reduce afterwards in
/// index order, so both paths produce bit-identical results.
enum class ExecPolicy { kSerial, kParallel };

template <class Body>
void for_each_index(std::size_t count, ExecPolicy policy, Body&& body) {
  if (policy == ExecPolicy::kSerial || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const auto n = static_cast<std::int64_t>(count);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(rfanova_for_each_index)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Caps the OpenMP team size; 0 leaves the runtime default.
inline void set_thread_cap(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rfanova
