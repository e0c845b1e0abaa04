#pragma once

#include "fbnash/types.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace fbnash {

/// Runs fn(begin, end) over contiguous chunks of [0, count). Chunks are
/// disjoint, so callers that only write their own columns get results that
/// do not depend on the thread count. The exception from the lowest chunk
/// wins.
template <class Fn>
void parallel_for(Index count, int threads, Fn&& fn) {
  constexpr Index kMinChunk = 64;
  if (threads <= 1 || count < 2 * kMinChunk) {
    fn(Index{0}, count);
    return;
  }
  const Index chunks = std::min<Index>(threads, (count + kMinChunk - 1) / kMinChunk);
  const Index per = (count + chunks - 1) / chunks;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  {
    std::vector<std::jthread> workers;
    workers.reserve(static_cast<std::size_t>(chunks));
    for (Index c = 0; c < chunks; ++c) {
      const Index begin = c * per;
      const Index end = std::min(count, begin + per);
      workers.emplace_back([&, c, begin, end] {
        try {
          fn(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fbnash
