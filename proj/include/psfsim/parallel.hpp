#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace psfsim {

// Runs body(chunk_begin, chunk_end) over [begin, end) split into contiguous
// chunks, one per worker. Callers must write to disjoint ranges; with that
// discipline the result is independent of the thread count.
inline void parallel_for_rows(int begin, int end, int threads,
                              const std::function<void(int, int)>& body) {
    const int n = end - begin;
    if (n <= 0) {
        return;
    }
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        body(begin, end);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = begin + t * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) {
            break;
        }
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) {
        th.join();
    }
}

} // namespace psfsim
