// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>

#include "pairsel/common.hpp"

namespace pairsel {

/// Runs body(i) for i in [0, n). The parallel path distributes indices over
/// OpenMP threads; if any iteration throws, the exception from the lowest
/// failing index is rethrown so both paths report the same error.
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body, int chunk = 1) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex mu;
  std::size_t first_failure = n;
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, chunk)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (static_cast<std::size_t>(i) < first_failure) {
        first_failure = static_cast<std::size_t>(i);
        failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace pairsel
