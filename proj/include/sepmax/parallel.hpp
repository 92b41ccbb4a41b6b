#ifndef SEPMAX_PARALLEL_HPP
#define SEPMAX_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sepmax {

/// Process-wide worker count used by the parallel kernels. 0 means
/// "hardware concurrency". The CLI sets this from --threads.
inline int& thread_count() {
    static int n = 0;
    return n;
}

inline int effective_threads() {
    int n = thread_count();
    if (n <= 0) {
        unsigned hc = std::thread::hardware_concurrency();
        n = hc == 0 ? 1 : static_cast<int>(hc);
    }
    return n;
}

namespace detail {

// Claims items from a shared counter; the first exception aborts the loop
// and is rethrown on the calling thread.
template <typename Fn>
void run_pool(std::size_t count, int workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto body = [&](int worker) {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i, worker);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(body, t);
    body(0);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace detail

/// Run fn(item, worker) for item in [0, count) on `workers` threads, where
/// worker is a stable id in [0, workers). Used for reductions that keep
/// per-worker partial state; the caller must combine partials with an
/// order-independent rule so results do not depend on the schedule.
/// Returns the worker count used.
template <typename Fn>
int parallel_for_worker(std::size_t count, Fn&& fn) {
    int workers = effective_threads();
    if (static_cast<std::size_t>(workers) > count) workers = static_cast<int>(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i, 0);
        return 1;
    }
    detail::run_pool(count, workers, fn);
    return workers;
}

/// Run fn(item) for item in [0, count) on up to effective_threads() threads.
/// fn must only write state owned by its item so that results do not depend
/// on the schedule.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    parallel_for_worker(count, [&](std::size_t i, int) { fn(i); });
}

} // namespace sepmax

#endif
