#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

// Minimal deterministic parallelism: tasks are indexed, every task writes to
// its own slot, and any reduction over task results is merged sequentially in
// index order by the caller. Results are therefore bit-identical for any
// thread count, including 1.

namespace mcdn {

inline int& thread_count_ref() {
    static int count = static_cast<int>(std::thread::hardware_concurrency());
    return count;
}

inline void set_num_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }
inline int num_threads() { return thread_count_ref() < 1 ? 1 : thread_count_ref(); }

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    if (n <= 0)
        return;
    const int threads = static_cast<int>(std::min<std::int64_t>(num_threads(), n));
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n)
                return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads - 1));
    for (int t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
}

} // namespace mcdn
