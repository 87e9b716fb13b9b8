// Serial reference kernels against their OpenMP versions.
#include "botsai/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace botsai;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = d(rng);
    return m;
}

// Every node reads `degree` random sources.
SegmentIndex random_index(std::size_t nodes, std::size_t degree, std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> lists(nodes);
    for (auto& l : lists) {
        for (std::size_t k = 0; k < degree; ++k) l.push_back(rng() % nodes);
    }
    return SegmentIndex::from_lists(nodes, nodes, lists);
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Matrix a = random_matrix(n, n, rng);
    const Matrix b = random_matrix(n, n, rng);
    Matrix c(n, n);
    for (auto _ : state) {
        Gemm(a, false, b, false, c, 0.0);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Forward>
void bm_attention(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    const std::size_t hidden = 64;
    std::mt19937_64 rng(2);
    const Matrix q = random_matrix(nodes, hidden, rng);
    const Matrix k = random_matrix(nodes, hidden, rng);
    const Matrix v = random_matrix(nodes, hidden, rng);
    const SegmentIndex idx = random_index(nodes, 8, rng);
    const kernels::AttentionShape shape{4, 0.25};
    Matrix out(nodes, hidden), alpha(idx.num_entries(), shape.heads);
    for (auto _ : state) {
        Forward(q, k, v, idx, shape, out, alpha);
        benchmark::DoNotOptimize(out.data());
    }
}

template <auto Mean>
void bm_segment_mean(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    const Matrix x = random_matrix(nodes, 64, rng);
    const SegmentIndex idx = random_index(nodes, 16, rng);
    Matrix out(nodes, 64);
    for (auto _ : state) {
        Mean(x, idx, out);
        benchmark::DoNotOptimize(out.data());
    }
}

} // namespace

BENCHMARK(bm_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<kernels::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_attention<kernels::serial::segment_attention_forward>)
    ->Name("segment_attention/serial")
    ->Arg(1000)
    ->Arg(10000);
BENCHMARK(bm_attention<kernels::omp::segment_attention_forward>)
    ->Name("segment_attention/omp")
    ->Arg(1000)
    ->Arg(10000);
BENCHMARK(bm_segment_mean<kernels::serial::segment_mean_forward>)
    ->Name("segment_mean/serial")
    ->Arg(1000)
    ->Arg(10000);
BENCHMARK(bm_segment_mean<kernels::omp::segment_mean_forward>)
    ->Name("segment_mean/omp")
    ->Arg(1000)
    ->Arg(10000);

BENCHMARK_MAIN();
