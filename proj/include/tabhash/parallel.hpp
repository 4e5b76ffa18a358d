#pragma once

// Static-chunked parallel loop. Work item i always runs the same code on the
// same inputs, so results indexed by i do not depend on the thread count.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tabhash {

// Calls body(chunk, begin, end) for `chunks` contiguous ranges covering [0, n).
template <class Body>
void parallel_chunks(std::uint64_t n, unsigned threads, std::uint64_t chunks, Body&& body) {
  if (n == 0) return;
  chunks = std::max<std::uint64_t>(1, std::min(chunks, n));
  auto range = [&](std::uint64_t c) { return std::pair{n * c / chunks, n * (c + 1) / chunks}; };
  threads = static_cast<unsigned>(std::max<std::uint64_t>(1, std::min<std::uint64_t>(threads, chunks)));
  if (threads == 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) {
      const auto [b, e] = range(c);
      body(c, b, e);
    }
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::uint64_t c = t; c < chunks; c += threads) {
          const auto [b, e] = range(c);
          body(c, b, e);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

template <class Body>
void parallel_for(std::uint64_t n, unsigned threads, Body&& body) {
  parallel_chunks(n, threads, std::uint64_t{threads} * 8, [&](std::uint64_t, std::uint64_t b, std::uint64_t e) {
    for (std::uint64_t i = b; i < e; ++i) body(i);
  });
}

}  // namespace tabhash
