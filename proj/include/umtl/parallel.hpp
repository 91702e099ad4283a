#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace umtl {

// Parallelism width: UMTL_THREADS overrides hardware_concurrency.
inline int thread_count() {
    if (const char* env = std::getenv("UMTL_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline int64_t chunk_count(int64_t n, int64_t chunk) {
    return (n + chunk - 1) / chunk;
}

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
// The chunk layout depends only on (n, chunk), never on the thread count, so
// callers that reduce per-chunk results in chunk order get bit-identical
// output at any parallelism width, including sequential.
template <class Fn>
void parallel_chunks(int64_t n, int64_t chunk, Fn&& fn) {
    if (n <= 0) return;
    const int64_t chunks = chunk_count(n, chunk);
    const int workers = static_cast<int>(std::min<int64_t>(thread_count(), chunks));
    if (workers <= 1) {
        for (int64_t c = 0; c < chunks; ++c)
            fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<int64_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            int64_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                fn(c, c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers) - 1);
    for (int i = 1; i < workers; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace umtl
