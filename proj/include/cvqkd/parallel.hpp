#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace cvqkd {

// Index-parallel map: every index writes only its own output slot, so the
// result is identical for any worker count or scheduling.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (n == 0)
        return;
    const std::size_t w =
        std::min<std::size_t>(n, workers < 1 ? 1 : static_cast<std::size_t>(workers));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
                fn(i);
        });
    }
    for (auto& th : pool)
        th.join();
}

} // namespace cvqkd
