#include "lws/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace lws {

static int detect_worker_count() {
    int n = (int)std::thread::hardware_concurrency();
    if (n < 1) n = 1;
    if (const char* env = std::getenv("LWS_FORGE_THREADS")) {
        try {
            int cap = std::stoi(env);
            if (cap >= 1) n = std::min(n, cap);
        } catch (...) {
            // unparsable value: keep the detected count
        }
    }
    return n;
}

int worker_count() {
    static const int n = detect_worker_count();
    return n;
}

void parallel_for(long long n, const std::function<void(long long, long long)>& fn) {
    if (n <= 0) return;
    const int workers = std::min<long long>(worker_count(), n);
    if (workers == 1 || n < 4) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const long long chunk = (n + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        long long begin = w * chunk;
        long long end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

} // namespace lws
