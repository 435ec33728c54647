#include "toruslab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace toruslab {

int default_thread_count() {
    if (const char* env = std::getenv(kThreadsEnv)) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t count, std::size_t chunks, int threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    if (count == 0) return;
    chunks = std::clamp<std::size_t>(chunks, 1, count);
    auto bounds = [&](std::size_t c) { return count * c / chunks; };

    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) body(c, bounds(c), bounds(c + 1));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                body(c, bounds(c), bounds(c + 1));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(chunks);
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(workers, chunks); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace toruslab
