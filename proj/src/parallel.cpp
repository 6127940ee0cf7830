#include "radsel/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace radsel {

namespace {

std::atomic<int> g_max_threads{0};
thread_local bool t_in_parallel = false;

int hardware_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace

void set_max_threads(int threads) { g_max_threads.store(std::max(0, threads)); }

int max_threads() {
    const int t = g_max_threads.load();
    return t > 0 ? t : hardware_threads();
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)> &body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), count);
    if (workers <= 1 || t_in_parallel) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        t_in_parallel = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                t_in_parallel = false;
                return;
            }
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(count);
                t_in_parallel = false;
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace radsel
