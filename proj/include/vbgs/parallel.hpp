#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vbgs {

namespace detail {

inline std::atomic<bool>& deterministic_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

inline thread_local bool in_parallel_region = false;

}  // namespace detail

/// Deterministic mode fixes the reduction order of gradient accumulation so
/// results do not depend on thread count or scheduling.
inline void set_deterministic(bool on) { detail::deterministic_flag().store(on); }
inline bool deterministic() { return detail::deterministic_flag().load(); }

/// Worker count; honours the VBGS_THREADS environment variable.
inline unsigned thread_count() {
    if (const char* env = std::getenv("VBGS_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for every i in [0, n). Work is handed out in blocks of
/// `grain` indices. Nested calls and small ranges run inline.
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t grain = 256) {
    const unsigned workers = thread_count();
    if (n == 0) return;
    if (workers <= 1 || n <= grain || detail::in_parallel_region) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        detail::in_parallel_region = true;
        try {
            for (;;) {
                const std::size_t begin = next.fetch_add(grain);
                if (begin >= n) break;
                const std::size_t end = std::min(n, begin + grain);
                for (std::size_t i = begin; i < end; ++i) body(i);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n);
        }
        detail::in_parallel_region = false;
    };
    const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(workers, (n + grain - 1) / grain));
    {
        std::vector<std::jthread> pool;
        pool.reserve(spawn - 1);
        for (unsigned t = 1; t < spawn; ++t) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace vbgs
