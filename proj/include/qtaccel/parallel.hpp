#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace qtaccel {

/// Runs fn(i) for i in [0, n) on up to `jobs` OpenMP threads (jobs <= 1 runs inline).
/// Every index writes only its own output slot, so results do not depend on `jobs`.
/// The first exception (lowest index) is rethrown after the loop.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace qtaccel
