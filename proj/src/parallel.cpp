#include "qsm/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

#include "qsm/errors.hpp"

namespace qsm {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
    if (n < 1) throw invalid_argument("set_max_threads: thread count must be >= 1");
    g_max_threads.store(n);
}

int max_threads() { return g_max_threads.load(); }

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = n * w / workers;
        const std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([&fn, lo, hi]() { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace qsm
