#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace prefminer {

// Worker count: `requested` when positive, else PREFMINER_THREADS, else hardware concurrency.
unsigned resolve_threads(int requested = 0);

// Runs fn(shard) for shard in [0, shards) on up to `threads` workers. Shard results must be
// written to pre-sized, shard-indexed storage so the merge order never depends on scheduling.
template <typename Fn>
void parallel_shards(std::size_t shards, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), shards));
  if (threads <= 1) {
    for (std::size_t s = 0; s < shards; ++s) fn(s);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t s = t; s < shards; s += threads) fn(s);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace prefminer
