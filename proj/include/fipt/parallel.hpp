// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace fipt {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Static partition of [0, n) into `threads` contiguous chunks. fn is called as
// fn(begin, end, worker). Chunk boundaries depend only on (n, threads), so a
// fixed thread count reproduces results bit-exactly; threads == 1 runs inline.
inline void parallel_for(int64_t n, int threads,
                         const std::function<void(int64_t, int64_t, int)>& fn) {
    threads = resolve_threads(threads);
    if (n <= 0) return;
    if (threads == 1 || n == 1) {
        fn(0, n, 0);
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        int64_t begin = n * w / workers;
        int64_t end = n * (w + 1) / workers;
        pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
    }
    for (auto& t : pool) t.join();
}

// Work-item parallelism where items are indivisible (e.g. image tiles).
// Worker w takes items w, w + T, w + 2T, ... so item->output mapping is fixed
// and outputs written disjointly per item are identical for any thread count.
inline void parallel_items(int64_t n, int threads,
                           const std::function<void(int64_t)>& fn) {
    threads = resolve_threads(threads);
    if (n <= 0) return;
    if (threads == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&fn, n, w, workers] {
            for (int64_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace fipt
