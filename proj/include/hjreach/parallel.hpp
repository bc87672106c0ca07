#pragma once

// Chunked parallel-for. `threads <= 1` runs inline on the calling thread,
// which is the strict-deterministic serial path. Chunk boundaries depend only
// on (n, threads), so per-chunk partial results can be combined in chunk
// order for reproducible reductions at a fixed thread count.

#include <functional>
#include <thread>
#include <vector>

namespace hjreach {

inline void parallel_chunks(std::size_t n, int threads,
                            const std::function<void(std::size_t, std::size_t, int)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        fn(0, n, 0);
        return;
    }
    const int nchunks = static_cast<int>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(nchunks);
    const std::size_t base = n / nchunks, rem = n % nchunks;
    std::size_t begin = 0;
    for (int c = 0; c < nchunks; ++c) {
        const std::size_t len = base + (static_cast<std::size_t>(c) < rem ? 1 : 0);
        const std::size_t end = begin + len;
        pool.emplace_back([&fn, begin, end, c] { fn(begin, end, c); });
        begin = end;
    }
    for (auto& t : pool) t.join();
}

inline int chunk_count(std::size_t n, int threads) {
    if (n == 0) return 0;
    if (threads <= 1 || n == 1) return 1;
    return static_cast<int>(std::min<std::size_t>(threads, n));
}

}  // namespace hjreach
