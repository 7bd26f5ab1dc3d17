// Serial AM4, OpenMP AM4 and the M4 oracle over the same random walk.
//   ./build/bench/am4_bench --benchmark_counters_tabular=true

#include <benchmark/benchmark.h>

#include <random>

#include "dashql/optimizer.hpp"

namespace {

struct Series {
    std::vector<double> x, y;
};

const Series& series(size_t n) {
    static std::map<size_t, Series> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Series s;
    s.x.resize(n);
    s.y.resize(n);
    std::mt19937_64 rng(n);
    std::normal_distribution<double> step(0, 1);
    double level = 0;
    for (size_t i = 0; i < n; ++i) {
        s.x[i] = static_cast<double>(i);
        level += step(rng);
        s.y[i] = level;
    }
    return cache.emplace(n, std::move(s)).first->second;
}

template <auto Fn>
void reduce(benchmark::State& state) {
    const Series& s = series(static_cast<size_t>(state.range(0)));
    dashql::Am4Params p{state.range(1), 0, static_cast<double>(s.x.size() - 1)};
    size_t out = 0;
    for (auto _ : state) {
        auto points = Fn(s.x, s.y, p);
        out = points.size();
        benchmark::DoNotOptimize(points.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(s.x.size()));
    state.counters["points"] = static_cast<double>(out);
}

void sizes(benchmark::internal::Benchmark* b) {
    for (int64_t n : {100'000, 500'000, 2'000'000}) b->Args({n, 2000});
    b->Args({500'000, 200});
    b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(reduce<dashql::am4_native>)->Name("am4_native")->Apply(sizes);
BENCHMARK(reduce<dashql::am4_parallel>)->Name("am4_parallel")->Apply(sizes);
BENCHMARK(reduce<dashql::m4_oracle>)->Name("m4_oracle")->Apply(sizes);

BENCHMARK_MAIN();
