#include "pathtransport/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pt {

unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PATH_TRANSPORT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return hw;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), count));

    std::mutex mu;
    std::size_t failed_index = count;
    std::exception_ptr failure;
    auto run = [&](std::size_t i) {
        try {
            body(i);
        } catch (...) {
            std::lock_guard lock(mu);
            if (i < failed_index) {
                failed_index = i;
                failure = std::current_exception();
            }
        }
    };

    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) run(i);
            });
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace pt
