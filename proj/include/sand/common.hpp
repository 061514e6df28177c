#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sand {

using Vec3 = Eigen::Vector3d;

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by readers on malformed or truncated files.
class FormatError : public Error {
public:
    using Error::Error;
};

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

/// Worker count: SAND_THREADS if set and positive, else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SAND_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(env, &end, 10);
        if (end != env && n > 0) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs fn(begin, end) over [0, n) split into contiguous chunks of at most
/// `grain` items. Chunk boundaries depend only on n and grain, never on the
/// worker count, so per-item results are identical for any thread count.
inline void parallel_chunks(std::size_t n, std::size_t grain,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    grain = std::max<std::size_t>(grain, 1);
    const std::size_t chunks = (n + grain - 1) / grain;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), chunks));
    auto run_chunk = [&](std::size_t c) {
        const std::size_t b = c * grain;
        fn(b, std::min(n, b + grain));
    };
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace sand
