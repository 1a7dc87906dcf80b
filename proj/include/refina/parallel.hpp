#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace refina::par {

// Worker count for sweep-cell parallelism in the harness. Controlled by
// the REFINA_WORKERS environment variable; 0 or unset means one worker.
inline int env_workers(const char* var = "REFINA_WORKERS") {
    const char* v = std::getenv(var);
    if (v == nullptr || *v == '\0') return 1;
    int n = std::atoi(v);
    if (n <= 0) return 1;
    return n;
}

// Static row partition across `threads` std::threads. Each index is
// processed by exactly one thread and body(i) must only write state owned
// by index i, so results are identical for any thread count.
template <typename Body>
void parallel_for(int begin, int end, int threads, Body&& body) {
    const int count = end - begin;
    if (count <= 0) return;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = begin; i < end; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = begin + t * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace refina::par
