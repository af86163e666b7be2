#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "hydra/tensor/grad_check.hpp"
#include "hydra/view/view_transform.hpp"
#include "test_util.hpp"

namespace hydra::view {
namespace {

using fixtures::random_tensor;
using fixtures::weighted_sum;

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

geo::BevGrid small_grid() {
    geo::BevGrid g;
    g.nx = 8;
    g.ny = 6;
    g.resolution = 1.0;
    g.origin_x = 0.0;
    g.origin_y = -3.0;
    return g;
}

FrustumFeatureCloud random_cloud(std::size_t points, std::size_t channels, const geo::BevGrid& grid,
                                 std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(-1.0, grid.nx * grid.resolution + 1.0);
    std::uniform_real_distribution<double> uy(grid.origin_y - 1.0, grid.origin_y + grid.ny * grid.resolution + 1.0);
    FrustumFeatureCloud cloud;
    cloud.features = random_tensor({points, channels}, rng);
    for (std::size_t p = 0; p < points; ++p) cloud.points.emplace_back(ux(rng), uy(rng), 0.0);
    return cloud;
}

geo::CameraRig two_camera_rig() {
    geo::CameraRig rig;
    rig.cameras.push_back(geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.0, 1.5));
    rig.cameras.push_back(geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.6, 1.5));
    return rig;
}

TEST(Lift, OneHotDepthCopiesContextToSlice) {
    auto depth = Tensor::from({1, 4}, {0, 0, 1, 0});
    auto ctx = Tensor::from({1, 3}, {1.5, -2.0, 0.25});
    auto out = outer_product_lift(depth, ctx);
    ASSERT_EQ(out.shape(), (ad::Shape{4, 3}));
    for (std::size_t d = 0; d < 4; ++d)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at({d, c}), d == 2 ? ctx.data()[c] : 0.0);
}

TEST(Lift, UniformDepthSplitsContext) {
    auto depth = Tensor::full({2, 5}, 0.2);
    std::mt19937_64 rng(1);
    auto ctx = random_tensor({2, 3}, rng);
    auto out = outer_product_lift(depth, ctx);
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t d = 0; d < 5; ++d)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.at({p * 5 + d, c}), ctx.at({p, c}) * 0.2);
}

TEST(Lift, SumOverDepthRecoversContext) {
    std::mt19937_64 rng(2);
    auto depth = ad::softmax(random_tensor({6, 7}, rng, -3, 3), 1);
    auto ctx = random_tensor({6, 4}, rng);
    auto out = outer_product_lift(depth, ctx);
    for (std::size_t p = 0; p < 6; ++p)
        for (std::size_t c = 0; c < 4; ++c) {
            double s = 0.0;
            for (std::size_t d = 0; d < 7; ++d) s += out.at({p * 7 + d, c});
            EXPECT_NEAR(s, ctx.at({p, c}), 1e-12);
        }
}

TEST(Lift, GradCheck) {
    std::mt19937_64 rng(3);
    auto fn = [](const std::vector<Tensor>& in) { return weighted_sum(outer_product_lift(in[0], in[1])); };
    const auto r = ad::grad_check(fn, {random_tensor({3, 4}, rng), random_tensor({3, 2}, rng)});
    EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(PoolNaive, SinglePointFillsItsCell) {
    auto grid = small_grid();
    FrustumFeatureCloud cloud;
    cloud.features = Tensor::from({1, 2}, {3.0, -1.0});
    cloud.points = {{2.5, 0.5, 1.0}};  // cell (2, 3)
    auto out = bev_pool_naive(cloud, grid);
    ASSERT_EQ(out.shape(), (ad::Shape{8, 6, 2}));
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            const bool hit = i == 2 && j == 3;
            EXPECT_EQ(out.at({i, j, 0}), hit ? 3.0 : 0.0);
            EXPECT_EQ(out.at({i, j, 1}), hit ? -1.0 : 0.0);
        }
}

TEST(PoolNaive, BoundaryPointGoesToUpperCellByHalfOpenRule) {
    auto grid = small_grid();
    FrustumFeatureCloud cloud;
    cloud.features = Tensor::from({1, 1}, {1.0});
    cloud.points = {{3.0, 0.0, 0.0}};  // x on the 2|3 edge, y on the 2|3 edge
    auto out = bev_pool_naive(cloud, grid);
    EXPECT_EQ(out.at({3, 3, 0}), 1.0);
    EXPECT_EQ(out.at({2, 2, 0}), 0.0);
    EXPECT_EQ(grid.cell_of(3.0, 0.0), std::make_optional(std::make_pair(3, 3)));
}

TEST(PoolNaive, MassOfInGridPointsIsConserved) {
    auto grid = small_grid();
    std::mt19937_64 rng(4);
    auto cloud = random_cloud(500, 3, grid, rng);
    auto out = bev_pool_naive(cloud, grid);
    double expect = 0.0, got = 0.0;
    for (std::size_t p = 0; p < 500; ++p) {
        if (!grid.cell_of(cloud.points[p].x(), cloud.points[p].y())) continue;
        for (std::size_t c = 0; c < 3; ++c) expect += cloud.features.at({p, c});
    }
    for (double v : out.data()) got += v;
    EXPECT_NEAR(got, expect, 1e-9);
}

TEST(PoolNaive, AddingAPointNeverShrinksNonNegativeMass) {
    auto grid = small_grid();
    std::mt19937_64 rng(5);
    auto cloud = random_cloud(60, 2, grid, rng);
    std::vector<double> f(cloud.features.data().begin(), cloud.features.data().end());
    for (auto& v : f) v = std::fabs(v);
    cloud.features = Tensor::from({60, 2}, f);
    auto before = bev_pool_naive(cloud, grid);
    f.push_back(0.7);
    f.push_back(0.1);
    cloud.features = Tensor::from({61, 2}, f);
    cloud.points.emplace_back(4.2, -1.1, 0.0);
    auto after = bev_pool_naive(cloud, grid);
    for (std::size_t i = 0; i < before.numel(); ++i) EXPECT_GE(after.data()[i], before.data()[i]);
}

TEST(PoolingIndexTest, IntervalsPartitionInGridPoints) {
    std::vector<std::int64_t> cells{5, -1, 2, 5, 0, 2, -1, 5};
    auto idx = build_pooling_index(cells, 2, 3);
    EXPECT_EQ(idx.num_points, 8u);
    EXPECT_EQ(idx.order, (std::vector<std::int64_t>{4, 2, 5, 0, 3, 7}));
    EXPECT_EQ(idx.interval_cell, (std::vector<std::int64_t>{0, 2, 5}));
    EXPECT_EQ(idx.interval_start, (std::vector<std::size_t>{0, 1, 3, 6}));
}

TEST(PoolingIndexTest, RandomCellsAreSortedAndComplete) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::int64_t> cell(-1, 47);
    std::vector<std::int64_t> cells(1000);
    for (auto& c : cells) c = cell(rng);
    auto idx = build_pooling_index(cells, 8, 6);
    std::size_t in_grid = 0;
    for (auto c : cells) in_grid += c >= 0;
    ASSERT_EQ(idx.order.size(), in_grid);
    for (std::size_t k = 0; k + 1 < idx.intervals(); ++k) EXPECT_LT(idx.interval_cell[k], idx.interval_cell[k + 1]);
    for (std::size_t k = 0; k < idx.intervals(); ++k)
        for (std::size_t r = idx.interval_start[k]; r < idx.interval_start[k + 1]; ++r) {
            EXPECT_EQ(cells[idx.order[r]], idx.interval_cell[k]);
            if (r > idx.interval_start[k]) EXPECT_LT(idx.order[r - 1], idx.order[r]);
        }
    EXPECT_THROW(build_pooling_index(std::vector<std::int64_t>{48}, 8, 6), ad::ShapeError);
}

TEST(PoolFast, MatchesNaiveBitwiseOnRandomClouds) {
    auto grid = small_grid();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        auto cloud = random_cloud(2000, 4, grid, rng);
        cloud.geometry_key = 42;
        auto idx = build_pooling_index(point_cells(cloud.points, grid), grid.nx, grid.ny, 42);
        auto naive = bev_pool_naive(cloud, grid);
        EXPECT_TRUE(bitwise_equal(naive, bev_pool_fast(cloud, idx, Exec::serial))) << seed;
        EXPECT_TRUE(bitwise_equal(naive, bev_pool_fast(cloud, idx, Exec::parallel))) << seed;
    }
}

TEST(PoolFast, EmptyCloudGivesZeroMap) {
    auto grid = small_grid();
    FrustumFeatureCloud cloud;
    cloud.features = Tensor::zeros({0, 3});
    auto idx = build_pooling_index(std::vector<std::int64_t>{}, grid.nx, grid.ny);
    auto out = bev_pool_fast(cloud, idx);
    EXPECT_EQ(out.shape(), (ad::Shape{8, 6, 3}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(PoolFast, AllPointsInOneCellSum) {
    auto grid = small_grid();
    std::mt19937_64 rng(7);
    FrustumFeatureCloud cloud;
    cloud.features = random_tensor({50, 2}, rng);
    cloud.points.assign(50, Eigen::Vector3d(1.5, -2.5, 0.0));
    auto out = bev_pool_fast(cloud, build_pooling_index(point_cells(cloud.points, grid), grid.nx, grid.ny));
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < 50; ++p) s += cloud.features.at({p, c});
        EXPECT_EQ(out.at({1, 0, c}), s);
    }
}

TEST(PoolFast, StaleIndexIsRejected) {
    auto rig = two_camera_rig();
    geo::FrustumSpec spec;
    geo::BevGrid grid;
    auto idx = build_pooling_index(rig, spec, grid);
    FrustumFeatureCloud cloud;
    cloud.points = frustum_points(rig, spec);
    cloud.features = Tensor::zeros({cloud.points.size(), 2});
    cloud.geometry_key = geometry_key(rig, spec, grid);
    EXPECT_NO_THROW(bev_pool_fast(cloud, idx));

    auto moved = rig;
    moved.cameras[1] = geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.7, 1.5);
    cloud.geometry_key = geometry_key(moved, spec, grid);
    EXPECT_THROW(bev_pool_fast(cloud, idx), StaleIndexError);

    auto fewer = Tensor::zeros({4, 30});
    EXPECT_THROW(bev_pool_lazy(fewer, Tensor::zeros({4, 2}), idx), StaleIndexError);
}

TEST(PoolLazy, EqualsFastOnLiftedCloudForRealRig) {
    auto rig = two_camera_rig();
    geo::FrustumSpec spec;
    geo::BevGrid grid;
    auto idx = build_pooling_index(rig, spec, grid);
    ASSERT_GT(idx.order.size(), 0u);
    const std::size_t pix = rig.cameras.size() * spec.feat_h * spec.feat_w;
    std::mt19937_64 rng(8);
    auto depth = ad::softmax(random_tensor({pix, 30}, rng, -2, 2), 1);
    auto ctx = random_tensor({pix, 5}, rng);
    FrustumFeatureCloud cloud;
    cloud.points = frustum_points(rig, spec);
    cloud.features = outer_product_lift(depth, ctx);
    cloud.geometry_key = geometry_key(rig, spec, grid);
    auto naive = bev_pool_naive(cloud, grid);
    EXPECT_TRUE(bitwise_equal(naive, bev_pool_fast(cloud, idx)));
    EXPECT_TRUE(bitwise_equal(naive, bev_pool_lazy(depth, ctx, idx, Exec::serial)));
    EXPECT_TRUE(bitwise_equal(naive, bev_pool_lazy(depth, ctx, idx, Exec::parallel)));
}

TEST(PoolLazy, GradCheck) {
    std::vector<std::int64_t> cells{0, 3, -1, 3, 1, 0, 2, 2, -1, 1, 3, 0};
    auto idx = build_pooling_index(cells, 2, 2);
    std::mt19937_64 rng(9);
    auto fn = [&](const std::vector<Tensor>& in) { return weighted_sum(bev_pool_lazy(in[0], in[1], idx)); };
    const auto r = ad::grad_check(fn, {random_tensor({4, 3}, rng), random_tensor({4, 2}, rng)});
    EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(PoolFast, GradMatchesNaiveGrad) {
    auto grid = small_grid();
    std::mt19937_64 rng(10);
    auto cloud = random_cloud(40, 2, grid, rng);
    auto idx = build_pooling_index(point_cells(cloud.points, grid), grid.nx, grid.ny);
    auto grads = [&](bool fast) {
        cloud.features.set_requires_grad(true);
        cloud.features.zero_grad();
        ad::backward(weighted_sum(fast ? bev_pool_fast(cloud, idx) : bev_pool_naive(cloud, grid)));
        auto g = cloud.features.grad();
        return std::vector<double>(g.begin(), g.end());
    };
    EXPECT_EQ(grads(false), grads(true));
}

TEST(Warp, IdentityMotionIsIdentity) {
    auto grid = small_grid();
    std::mt19937_64 rng(11);
    auto prev = random_tensor({8, 6, 3}, rng);
    auto out = warp_bev_history(prev, {}, grid);
    EXPECT_TRUE(bitwise_equal(out, prev));
}

TEST(Warp, OneCellForwardIsIntegerShift) {
    auto grid = small_grid();
    std::mt19937_64 rng(12);
    auto prev = random_tensor({8, 6, 2}, rng);
    // ego moved one cell forward: current cell i sees previous cell i+1
    auto out = warp_bev_history(prev, {grid.resolution, 0.0, 0.0}, grid);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t c = 0; c < 2; ++c)
                EXPECT_EQ(out.at({i, j, c}), i + 1 < 8 ? prev.at({i + 1, j, c}) : 0.0);
    auto left = warp_bev_history(prev, {0.0, -grid.resolution, 0.0}, grid);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(left.at({i, j, 0}), j >= 1 ? prev.at({i, j - 1, 0}) : 0.0);
}

TEST(Warp, HalfTurnOfSymmetricMapIsUnchanged) {
    geo::BevGrid grid;
    grid.nx = 6;
    grid.ny = 4;
    grid.resolution = 0.5;
    grid.origin_x = -1.5;
    grid.origin_y = -1.0;
    std::mt19937_64 rng(13);
    auto base = random_tensor({6, 4, 2}, rng);
    std::vector<double> sym(base.numel());
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t c = 0; c < 2; ++c)
                sym[(i * 4 + j) * 2 + c] = base.at({i, j, c}) + base.at({5 - i, 3 - j, c});
    auto map = Tensor::from({6, 4, 2}, sym);
    auto out = warp_bev_history(map, {0.0, 0.0, std::numbers::pi}, grid);
    for (std::size_t k = 0; k < sym.size(); ++k) EXPECT_NEAR(out.data()[k], sym[k], 1e-12);
}

TEST(Warp, RejectsMismatchedMap) {
    EXPECT_THROW(warp_bev_history(Tensor::zeros({3, 3, 1}), {}, small_grid()), ad::ShapeError);
}

TEST(Bench, CsvHasOneRowPerKernel) {
    auto rows = run_pool_benchmark(50, 10, 4, 16, 2, 1);
    ASSERT_EQ(rows.size(), 3u);
    const auto csv = pool_bench_csv(rows);
    EXPECT_EQ(csv.rfind("kernel,points,cells,ns_per_point\n", 0), 0u);
    EXPECT_NE(csv.find("naive,500,256,"), std::string::npos);
    for (const auto& r : rows) EXPECT_GT(r.ns_per_point, 0.0);
}

}  // namespace
}  // namespace hydra::view
