#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace specarray {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{1};
    return cap;
}
} // namespace detail

// Process-wide worker cap. 0 selects hardware_concurrency. Default 1.
inline void set_max_threads(int n) {
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    detail::thread_cap().store(n);
}

inline int max_threads() { return detail::thread_cap().load(); }

// Splits [0, n) into n_chunks contiguous chunks and runs
// fn(chunk_index, begin, end) for each. The chunk layout depends only on n
// and n_chunks, never on the thread count, so reductions that combine
// per-chunk partials in chunk order produce identical bytes no matter how
// many threads execute them.
inline void parallel_chunks(std::size_t n, int n_chunks,
                            const std::function<void(int, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const int chunks = std::max(1, n_chunks);
    auto bounds = [&](int c) {
        const std::size_t b = n * static_cast<std::size_t>(c) / chunks;
        const std::size_t e = n * static_cast<std::size_t>(c + 1) / chunks;
        return std::pair<std::size_t, std::size_t>{b, e};
    };
    const int workers = std::min(max_threads(), chunks);
    if (workers <= 1) {
        for (int c = 0; c < chunks; ++c) {
            auto [b, e] = bounds(c);
            if (b < e) fn(c, b, e);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const int c = next.fetch_add(1);
                if (c >= chunks) return;
                auto [b, e] = bounds(c);
                if (b < e) fn(c, b, e);
            }
        });
    }
    for (auto& t : pool) t.join();
}

// Chunk count used for gradient reductions; fixed so accumulation order is
// independent of the thread count.
inline constexpr int kReductionChunks = 8;

} // namespace specarray
