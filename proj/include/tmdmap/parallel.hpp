#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace tmdmap {

/// Number of workers to use for `requested` (0 = hardware concurrency).
inline std::size_t resolve_workers(std::size_t requested, std::size_t jobs) {
    std::size_t w = requested;
    if (w == 0) w = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(w, jobs));
}

/// Runs fn(0) .. fn(n_jobs - 1) on a bounded pool of threads and returns the
/// results in job order. The first failing job (by index) has its exception
/// rethrown after all workers have finished.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n_jobs, std::size_t workers, Fn&& fn) {
    std::vector<std::optional<T>> slots(n_jobs);
    std::vector<std::exception_ptr> errors(n_jobs);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t w = resolve_workers(workers, n_jobs);
    if (w <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(w);
        for (std::size_t t = 0; t < w; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(n_jobs);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace tmdmap
