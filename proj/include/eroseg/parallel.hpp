#ifndef EROSEG_PARALLEL_HPP
#define EROSEG_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace eroseg {

// EROSEG_THREADS caps internal parallelism; unset or 0 means the
// single-threaded deterministic mode.
inline int thread_budget() {
    const char* env = std::getenv("EROSEG_THREADS");
    if (!env) return 0;
    const int v = std::atoi(env);
    return v < 0 ? 0 : v;
}

// Runs fn(0..count-1). Work items must be independent; callers are
// responsible for merging any results in index order.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    const int budget = thread_budget();
    if (budget <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(budget, count);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(error_mu);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace eroseg

#endif  // EROSEG_PARALLEL_HPP
