#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <utility>
#include <vector>

namespace roadlstm {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};  // 0 = use hardware_concurrency
    return n;
}
}  // namespace detail

inline int num_threads() {
    int n = detail::thread_count_slot().load(std::memory_order_relaxed);
    if (n > 0) return n;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline void set_num_threads(int n) {
    detail::thread_count_slot().store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

// Runs fn(i) for every i in [0, n). Iterations must write to disjoint state;
// under that condition the result is bit-identical to the sequential loop
// regardless of the thread count.
template <class F>
void parallel_for(int n, F&& fn) {
    if (n <= 0) return;
    int nt = std::min(num_threads(), n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nt) - 1);
    const int chunk = (n + nt - 1) / nt;
    auto run = [&fn](int b, int e) {
        for (int i = b; i < e; ++i) fn(i);
    };
    for (int t = 1; t < nt; ++t) {
        int b = t * chunk;
        int e = std::min(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back(run, b, e);
    }
    run(0, std::min(n, chunk));
    for (auto& w : workers) w.join();
}

// Fixed number of reduction chunks. Gradient reductions always combine
// exactly these chunks in index order, so the floating-point summation tree
// does not depend on how many threads actually ran.
inline constexpr int kReduceChunks = 8;

struct ChunkRange {
    int begin;
    int end;
};

inline std::vector<ChunkRange> reduce_chunks(int n) {
    std::vector<ChunkRange> out;
    int c = std::min(kReduceChunks, n);
    if (c <= 0) return out;
    int base = n / c, rem = n % c;
    int pos = 0;
    for (int i = 0; i < c; ++i) {
        int len = base + (i < rem ? 1 : 0);
        out.push_back({pos, pos + len});
        pos += len;
    }
    return out;
}

}  // namespace roadlstm
