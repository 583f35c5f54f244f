// Microbenchmarks for the kernels that dominate sampling and pruning:
// dense/list-based forward passes, the group-prior gradient, LSTM steps,
// and global threshold selection.

#include <benchmark/benchmark.h>

#include <vector>

#include "sse/fnn.hpp"
#include "sse/grouping.hpp"
#include "sse/gsp.hpp"
#include "sse/lstm.hpp"
#include "sse/matrix.hpp"
#include "sse/params.hpp"
#include "sse/pruning.hpp"
#include "sse/rng.hpp"

namespace {

sse::Matrix random_matrix(std::size_t rows, std::size_t cols, sse::RngStream& rng) {
    sse::Matrix m(rows, cols);
    for (double& v : m.flat()) v = rng.next_gaussian(0.0, 1.0);
    return m;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    sse::RngStream rng(7);
    const sse::Matrix a = random_matrix(n, n, rng);
    const sse::Matrix b = random_matrix(n, n, rng);
    sse::Matrix c(n, n);
    for (auto _ : state) {
        sse::matmul_into(a, b, c);
        benchmark::DoNotOptimize(c.flat().data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_FnnForward(benchmark::State& state) {
    sse::RngStream rng(11);
    const sse::FnnParams p = sse::FnnParams::glorot({784, 300, 100, 10}, rng);
    const sse::Matrix x = random_matrix(128, 784, rng);
    for (auto _ : state) {
        sse::Matrix probs = sse::fnn_forward(p, x);
        benchmark::DoNotOptimize(probs.flat().data());
    }
}
BENCHMARK(BM_FnnForward);

void BM_LstmStep(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    sse::RngStream rng(13);
    const sse::Matrix w = random_matrix(2 * n, 4 * n, rng);
    const sse::Matrix b = random_matrix(1, 4 * n, rng);
    const sse::Matrix cat = random_matrix(32, 2 * n, rng);
    const sse::Matrix c_prev = random_matrix(32, n, rng);
    sse::Matrix gates(32, 4 * n), c(32, n), tanh_c(32, n), h(32, n);
    for (auto _ : state) {
        sse::lstm_cell(w, b, cat, c_prev, gates, c, tanh_c, h);
        benchmark::DoNotOptimize(h.flat().data());
    }
}
BENCHMARK(BM_LstmStep)->Arg(128)->Arg(256);

void BM_GspGradient(benchmark::State& state) {
    sse::RngStream rng(17);
    sse::ModelParams model = sse::FnnParams::glorot({784, 300, 100, 10}, rng);
    const sse::GroupingSpec groups =
        sse::build_groups(model, sse::GroupStrategy::FnnOutgoing);
    sse::ModelParams grad = sse::zeros_like(model);
    const sse::GspConfig cfg{1e-4, 0.0};
    for (auto _ : state) {
        sse::set_zero(grad);
        sse::gsp_gradient_accumulate(model, groups, cfg, grad);
        benchmark::DoNotOptimize(&grad);
    }
}
BENCHMARK(BM_GspGradient);

void BM_Threshold(benchmark::State& state) {
    sse::RngStream rng(19);
    sse::ModelParams model = sse::FnnParams::glorot({784, 300, 100, 10}, rng);
    for (auto _ : state) {
        const double tau = sse::compute_threshold(model, 0.9);
        benchmark::DoNotOptimize(tau);
    }
}
BENCHMARK(BM_Threshold);

}  // namespace

BENCHMARK_MAIN();
