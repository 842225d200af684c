#include "dnetknn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dnetknn {

namespace {

std::atomic<std::size_t> g_threads{0};

std::size_t resolved_threads() {
    std::size_t n = g_threads.load();
    if (n == 0) {
        n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
    return n;
}

// Runs task(t) for t in [0, tasks) on up to num_threads() threads, rethrowing
// the first exception.
void run_tasks(std::size_t tasks, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::min(resolved_threads(), tasks);
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) {
            task(t);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks; t = next++) {
            try {
                task(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        worker();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace

void set_num_threads(std::size_t n) { g_threads.store(n); }

std::size_t num_threads() { return resolved_threads(); }

void parallel_shards(std::size_t n, std::size_t shards,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (shards == 0) {
        shards = 1;
    }
    run_tasks(shards, [&](std::size_t s) {
        const std::size_t begin = n * s / shards;
        const std::size_t end = n * (s + 1) / shards;
        fn(s, begin, end);
    });
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t shards = std::min<std::size_t>(n, resolved_threads() * 4);
    parallel_shards(n, shards, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            fn(i);
        }
    });
}

} // namespace dnetknn
