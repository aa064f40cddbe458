#pragma once

#include "elda/types.hpp"

#include <algorithm>
#include <future>
#include <thread>
#include <vector>

// Internal data parallelism. Callers either write disjoint outputs (any
// chunking is then bit-deterministic) or reduce partial results in fixed
// chunk order, so outputs never depend on the thread count.

namespace elda::detail {

inline unsigned worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// f(begin, end) over disjoint ranges of [0, n).
template <class F>
void parallel_for(Index n, Index min_grain, F&& f) {
    const Index workers = static_cast<Index>(worker_count());
    if (workers <= 1 || n < 2 * min_grain) {
        f(Index{0}, n);
        return;
    }
    const Index chunks = std::min(workers, std::max<Index>(1, n / min_grain));
    const Index per = (n + chunks - 1) / chunks;
    std::vector<std::future<void>> futures;
    for (Index c = 0; c < chunks; ++c) {
        const Index b = c * per;
        const Index e = std::min(n, b + per);
        if (b >= e) break;
        futures.push_back(std::async(std::launch::async, [&f, b, e] { f(b, e); }));
    }
    for (auto& fu : futures) fu.get();
}

// Chunked map-reduce. The chunk layout depends only on n and min_grain,
// never on the thread count, and partials are combined in chunk order, so
// the reduction tree (and therefore every bit of the result) is identical
// whether chunks ran serially or concurrently.
inline constexpr Index kReduceChunks = 8;

template <class Partial, class Map, class Combine>
void parallel_reduce(Index n, Index min_grain, Partial make_partial, Map&& map,
                     Combine&& combine) {
    const Index chunks = std::min<Index>(kReduceChunks, std::max<Index>(1, n / min_grain));
    const Index per = (n + chunks - 1) / chunks;
    using PartialT = decltype(make_partial());

    if (worker_count() <= 1 || chunks <= 1) {
        for (Index c = 0; c < chunks; ++c) {
            const Index b = c * per;
            const Index e = std::min(n, b + per);
            if (b >= e) break;
            auto part = make_partial();
            map(b, e, part);
            combine(part);
        }
        return;
    }

    std::vector<std::future<PartialT>> futures;
    for (Index c = 0; c < chunks; ++c) {
        const Index b = c * per;
        const Index e = std::min(n, b + per);
        if (b >= e) break;
        futures.push_back(std::async(std::launch::async, [&, b, e] {
            auto part = make_partial();
            map(b, e, part);
            return part;
        }));
    }
    for (auto& fu : futures) combine(fu.get());
}

} // namespace elda::detail
