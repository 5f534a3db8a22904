#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "nubble/grid.hpp"

namespace nubble {

/// Worker cap for the data-parallel routines. Results never depend on it.
struct Exec {
  unsigned threads = 1;
};

/// Calls body(i) for every i in [0, count), splitting the range into
/// contiguous static chunks. Each index is visited exactly once, so any body
/// that writes only its own output slot is schedule-independent.
template <typename Body>
void parallel_for(Index count, Exec exec, Body&& body) {
  const Index workers = std::min<Index>(std::max(1u, exec.threads), std::max<Index>(count, 1));
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (count + workers - 1) / workers;
  for (Index w = 0; w < workers; ++w) {
    const Index begin = w * chunk;
    const Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace nubble
