#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "hydra/radar/pillars.hpp"
#include "test_util.hpp"

using namespace hydra;
using radar::RadarPoint;
using radar::RadarPointCloud;

namespace {

geo::BevGrid origin_grid(int n = 4) {
    geo::BevGrid g;
    g.nx = g.ny = n;
    g.origin_x = g.origin_y = 0.0;
    return g;
}

radar::PillarEncoder random_encoder(std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {fixtures::random_tensor({radar::kPointFeatures, channels}, rng),
            fixtures::random_tensor({channels}, rng, 0.1, 0.5)};
}

// Encoder applied by hand for one point relative to its cell center.
std::vector<double> encode(const RadarPoint& p, double cx, double cy, const radar::PillarEncoder& enc) {
    const double in[5] = {p.rcs, p.vx, p.vy, p.x - cx, p.y - cy};
    std::vector<double> out(enc.channels());
    for (std::size_t c = 0; c < out.size(); ++c) {
        double acc = enc.bias.data()[c];
        for (int k = 0; k < 5; ++k) acc += in[k] * enc.weight.data()[k * out.size() + c];
        out[c] = std::max(acc, 0.0);
    }
    return out;
}

geo::BevGrid ahead_grid() {
    geo::BevGrid g;
    g.nx = 32;
    g.ny = 32;
    g.origin_x = 0.0;
    g.origin_y = -12.8;
    return g;
}

geo::FrustumSpec spec() {
    geo::FrustumSpec s;
    s.feat_h = 4;
    s.feat_w = 11;
    s.depth_bins = 30;
    s.d_min = 1.0;
    s.d_step = 0.5;
    s.downsample = 16;
    return s;
}

}  // namespace

TEST(Radar, SinglePointOccupiesOneCell) {
    const auto grid = origin_grid();
    RadarPointCloud cloud{{{0.4, 0.4, 0, 5, 1, 0}}};
    const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(8, 1));
    for (int k = 0; k < grid.cells(); ++k) EXPECT_EQ(pillars.occupancy[k], k == 0 ? 1 : 0);
    EXPECT_EQ(pillars.features.shape(), (ad::Shape{4, 4, 8}));
}

TEST(Radar, BoundaryPointGoesToUpperCell) {
    const auto grid = origin_grid();
    RadarPointCloud cloud{{{0.8, 0.1, 0, 0, 0, 0}}};
    const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(4, 2));
    EXPECT_EQ(pillars.occupancy[grid.flat(1, 0)], 1);
    EXPECT_EQ(pillars.occupancy[grid.flat(0, 0)], 0);
}

TEST(Radar, OutOfGridPointsAreDroppedAndCounted) {
    RadarPointCloud cloud{{{-1, 0, 0, 0, 0, 0}, {100, 0, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0}}};
    const auto pillars = radar::voxelize_pillars(cloud, origin_grid(), random_encoder(4, 3));
    EXPECT_EQ(pillars.dropped, 2u);
}

TEST(Radar, TwoPointsInCellTakeElementwiseMax) {
    const auto grid = origin_grid();
    const auto enc = random_encoder(16, 4);
    const RadarPoint a{0.1, 0.2, 0, 3.0, -1.0, 0.5}, b{0.6, 0.7, 0, -2.0, 2.0, 1.0};
    const auto pillars = radar::voxelize_pillars({{a, b}}, grid, enc);
    const auto ea = encode(a, 0.4, 0.4, enc), eb = encode(b, 0.4, 0.4, enc);
    for (std::size_t c = 0; c < 16; ++c) {
        EXPECT_DOUBLE_EQ(pillars.features.at({0, 0, c}), std::max(ea[c], eb[c]));
    }
}

TEST(Radar, UnoccupiedPillarsAreExactlyZero) {
    const auto grid = origin_grid();
    RadarPointCloud cloud{{{1.3, 2.2, 0, 7, 1, 1}}};
    const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(8, 5));
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            if (pillars.occupancy[grid.flat(i, j)]) continue;
            for (std::size_t c = 0; c < 8; ++c) {
                EXPECT_EQ(pillars.features.at({std::size_t(i), std::size_t(j), c}), 0.0);
            }
        }
    }
}

TEST(Radar, VoxelizationIsPermutationInvariant) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> pos(0.0, 3.2), val(-3, 3);
    RadarPointCloud cloud;
    for (int i = 0; i < 40; ++i) cloud.points.push_back({pos(rng), pos(rng), 0, val(rng), val(rng), val(rng)});
    const auto enc = random_encoder(8, 7);
    const auto ref = radar::voxelize_pillars(cloud, origin_grid(), enc);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
        const auto got = radar::voxelize_pillars(cloud, origin_grid(), enc);
        for (std::size_t k = 0; k < ref.features.numel(); ++k) {
            EXPECT_EQ(got.features.data()[k], ref.features.data()[k]);
        }
    }
}

TEST(Radar, EmptyCloudGivesZeroPillarsAndFrustum) {
    const auto grid = ahead_grid();
    const auto pillars = radar::voxelize_pillars({}, grid, random_encoder(8, 8));
    for (double v : pillars.features.data()) EXPECT_EQ(v, 0.0);
    geo::CameraRig rig{{geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.0, 1.5)}};
    std::mt19937_64 rng(9);
    const auto fr = radar::rasterize_to_frustum(pillars, grid, rig, spec(), fixtures::random_tensor({8, 6}, rng));
    ASSERT_EQ(fr.size(), 1u);
    EXPECT_EQ(fr[0].features.shape(), (ad::Shape{30, 11, 6}));
    for (double v : fr[0].features.data()) EXPECT_EQ(v, 0.0);
}

TEST(Radar, PillarTenMetersAheadLandsInBin18CentralColumn) {
    const auto grid = ahead_grid();
    // cell (12, 16) has its center at (10.0, 0.4): depth 10 m, u = 88 - 4
    ASSERT_NEAR(grid.cell_center(12, 16).x(), 10.0, 1e-12);
    ASSERT_NEAR(grid.cell_center(12, 16).y(), 0.4, 1e-12);
    RadarPointCloud cloud{{{10.1, 0.1, 0, 5, 1, 0}}};
    const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(4, 10));
    geo::CameraRig rig{{geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.0, 1.5)}};
    std::mt19937_64 rng(11);
    const auto fr = radar::rasterize_to_frustum(pillars, grid, rig, spec(), fixtures::random_tensor({4, 4}, rng));
    const int column = 88 / 16;
    for (int k = 0; k < 30; ++k) {
        for (int w = 0; w < 11; ++w) EXPECT_EQ(fr[0].occupancy[k * 11 + w], (k == 18 && w == column) ? 1 : 0);
    }
}

TEST(Radar, PillarBehindCameraLeavesFrustumEmpty) {
    geo::BevGrid grid = ahead_grid();
    grid.origin_x = -20.0;
    RadarPointCloud cloud{{{-10.0, 0.1, 0, 5, 1, 0}}};
    const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(4, 12));
    geo::CameraRig rig{{geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.0, 1.5)}};
    std::mt19937_64 rng(13);
    const auto fr = radar::rasterize_to_frustum(pillars, grid, rig, spec(), fixtures::random_tensor({4, 4}, rng));
    for (double v : fr[0].features.data()) EXPECT_EQ(v, 0.0);
    for (auto o : fr[0].occupancy) EXPECT_EQ(o, 0);
}

TEST(Radar, CollidingPillarsAreMaxPooled) {
    const auto grid = ahead_grid();
    // adjacent cells along y at 12 m project into the same column and bin
    RadarPointCloud cloud{{{12.1, 0.1, 0, 5, 1, 0}, {12.1, -0.3, 0, -3, -2, 1}}};
    const auto enc = random_encoder(6, 14);
    const auto pillars = radar::voxelize_pillars(cloud, grid, enc);
    geo::CameraRig rig{{geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.0, 1.5)}};
    const auto slots = radar::frustum_slots(pillars, grid, rig.cameras[0], spec());
    const int a = grid.flat(15, 16), b = grid.flat(15, 15);
    ASSERT_GE(slots[a], 0);
    ASSERT_EQ(slots[a], slots[b]);

    // identity projection exposes the pooled pillar features directly
    std::vector<double> eye(36, 0.0);
    for (int c = 0; c < 6; ++c) eye[c * 6 + c] = 1.0;
    const auto fr = radar::rasterize_to_frustum(pillars, grid, rig, spec(), ad::Tensor::from({6, 6}, eye));
    const auto slot = static_cast<std::size_t>(slots[a]);
    for (std::size_t c = 0; c < 6; ++c) {
        const double expected = std::max(pillars.features.at({15, 16, c}), pillars.features.at({15, 15, c}));
        EXPECT_EQ(fr[0].features.data()[slot * 6 + c], expected);
    }
    std::size_t occupied = 0;
    for (auto o : fr[0].occupancy) occupied += o;
    EXPECT_EQ(occupied, 1u);
}

TEST(Radar, OccupiedSlotsNeverExceedVisiblePillars) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> x(0, 25.6), y(-12.8, 12.8);
    const auto grid = ahead_grid();
    geo::CameraRig rig{{geo::make_mounted_camera(100, 100, 88, 32, 176, 64, 0.5, 1.5),
                        geo::make_mounted_camera(100, 100, 88, 32, 176, 64, -0.5, 1.5)}};
    for (int trial = 0; trial < 10; ++trial) {
        RadarPointCloud cloud;
        for (int i = 0; i < 60; ++i) cloud.points.push_back({x(rng), y(rng), 0, 1, 0, 0});
        const auto pillars = radar::voxelize_pillars(cloud, grid, random_encoder(4, 16));
        const auto fr = radar::rasterize_to_frustum(pillars, grid, rig, spec(), fixtures::random_tensor({4, 4}, rng));
        for (std::size_t cam = 0; cam < 2; ++cam) {
            const auto slots = radar::frustum_slots(pillars, grid, rig.cameras[cam], spec());
            const auto visible = std::count_if(slots.begin(), slots.end(), [](auto s) { return s >= 0; });
            const auto occupied = std::count(fr[cam].occupancy.begin(), fr[cam].occupancy.end(), 1);
            EXPECT_LE(occupied, visible);
        }
    }
}

TEST(Radar, CsvRoundTripAndValidation) {
    RadarPointCloud cloud{{{1.5, -2.25, 0, 12.5, 0.1, -3}, {7, 8, 0.5, -4, 0, 0}}};
    std::stringstream ss;
    radar::write_radar_csv(ss, cloud);
    const auto back = radar::read_radar_csv(ss);
    ASSERT_EQ(back.points.size(), 2u);
    EXPECT_EQ(back.points[0].y, -2.25);
    EXPECT_EQ(back.points[1].rcs, -4);

    std::stringstream bad_header("a,b\n1,2\n");
    EXPECT_THROW(radar::read_radar_csv(bad_header), std::invalid_argument);
    std::stringstream bad_row("x,y,z,rcs,vx,vy\n1,2,3\n");
    EXPECT_THROW(radar::read_radar_csv(bad_row), std::invalid_argument);
}
