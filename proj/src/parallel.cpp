#include "ovt/parallel.hpp"

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace ovt {

std::size_t configured_thread_count() {
    const char* env = std::getenv("OVT_THREADS");
    if (env == nullptr) return 1;
    try {
        const long n = std::stol(env);
        if (n < 1) return 1;
        return static_cast<std::size_t>(n);
    } catch (...) {
        return 1;
    }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min(configured_thread_count(), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([t, threads, n, &fn]() {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace ovt
