#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace margin_auditor {

// Worker count from MARGIN_AUDITOR_THREADS (0 or unset = hardware concurrency).
inline std::size_t worker_count() {
  std::size_t n = 0;
  if (const char* env = std::getenv("MARGIN_AUDITOR_THREADS")) {
    try {
      n = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Calls body(begin, end) over contiguous chunks of [0, count). Chunks touch
// disjoint rows, so results do not depend on the worker count.
template <typename Body>
void parallel_for_rows(std::size_t count, Body&& body, std::size_t min_chunk = 64) {
  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(1, count / min_chunk));
  if (workers <= 1) {
    body(std::size_t{0}, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace margin_auditor
