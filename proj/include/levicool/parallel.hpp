#pragma once

// Deterministic fan-out over independent tasks. Each task writes only its
// own result slot, so output never depends on the thread count.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <random>
#include <thread>
#include <vector>

namespace levicool {

inline unsigned default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Calls f(i) for i in [0, n) on up to `threads` workers. Indices are
/// interleaved across workers. If any task throws, the exception from the
/// lowest index is rethrown after all workers join.
template <class F> void parallel_for(std::size_t n, unsigned threads, F &&f) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += threads) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto &t : pool)
      t.join();
  }
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

/// Engine for task `index`, noise stream `stream` under a master seed.
inline std::mt19937_64 make_engine(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/// 64-bit sub-seed for provenance records.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  auto eng = make_engine(master, index, stream);
  return eng();
}

} // namespace levicool
