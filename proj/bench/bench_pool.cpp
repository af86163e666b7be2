#include <benchmark/benchmark.h>

#include <random>

#include "hydra/view/view_transform.hpp"

namespace {

using hydra::ad::Tensor;
using namespace hydra::view;

struct Fixture {
    hydra::geo::BevGrid grid;
    Tensor depth, context;
    FrustumFeatureCloud cloud;
    PoolingIndex index;

    Fixture(std::size_t pixels, std::size_t bins, std::size_t channels, int grid_n) {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        grid.nx = grid.ny = grid_n;
        grid.origin_y = -0.4 * grid_n;
        const double extent = grid.resolution * grid_n;
        std::vector<double> d(pixels * bins), c(pixels * channels);
        for (auto& v : d) v = unit(rng);
        for (auto& v : c) v = unit(rng);
        depth = Tensor::from({pixels, bins}, d);
        context = Tensor::from({pixels, channels}, c);
        for (std::size_t p = 0; p < pixels * bins; ++p)
            cloud.points.emplace_back(unit(rng) * extent, grid.origin_y + unit(rng) * extent, 0.0);
        index = build_pooling_index(point_cells(cloud.points, grid), grid_n, grid_n);
    }
};

void BM_Naive(benchmark::State& state) {
    hydra::ad::NoGradGuard guard;
    Fixture f(static_cast<std::size_t>(state.range(0)), 25, 32, 128);
    for (auto _ : state) {
        f.cloud.features = outer_product_lift(f.depth, f.context);
        benchmark::DoNotOptimize(bev_pool_naive(f.cloud, f.grid));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 25);
}

void BM_FastSerial(benchmark::State& state) {
    hydra::ad::NoGradGuard guard;
    Fixture f(static_cast<std::size_t>(state.range(0)), 25, 32, 128);
    for (auto _ : state) benchmark::DoNotOptimize(bev_pool_lazy(f.depth, f.context, f.index, Exec::serial));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 25);
}

void BM_FastParallel(benchmark::State& state) {
    hydra::ad::NoGradGuard guard;
    Fixture f(static_cast<std::size_t>(state.range(0)), 25, 32, 128);
    for (auto _ : state) benchmark::DoNotOptimize(bev_pool_lazy(f.depth, f.context, f.index, Exec::parallel));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 25);
}

BENCHMARK(BM_Naive)->Arg(400)->Arg(4000);
BENCHMARK(BM_FastSerial)->Arg(400)->Arg(4000);
BENCHMARK(BM_FastParallel)->Arg(400)->Arg(4000);

}  // namespace

BENCHMARK_MAIN();
