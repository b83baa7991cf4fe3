#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fbl {

/// Worker count from the FBL_GAUSAC_WORKERS environment variable, else the
/// hardware concurrency (at least 1).
unsigned default_workers();

/// Runs body(i) for every i in [0, count) on up to `workers` threads.
/// Indices are handed out in fixed-size chunks; callers write results into
/// per-index slots so the outcome does not depend on the worker count.
/// The first exception thrown by any body is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body, std::size_t chunk = 64) {
    workers = std::max(1u, workers);
    if (workers == 1 || count <= chunk) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= count) return;
            const std::size_t end = std::min(count, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    const unsigned spawned = static_cast<unsigned>(std::min<std::size_t>(workers, (count + chunk - 1) / chunk));
    std::vector<std::jthread> pool;
    pool.reserve(spawned);
    for (unsigned w = 0; w < spawned; ++w) pool.emplace_back(worker);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace fbl
