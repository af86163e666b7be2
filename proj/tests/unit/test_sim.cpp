#include <gtest/gtest.h>

#include <Eigen/LU>
#include <cmath>
#include <random>

#include "hydra/sim/metrics.hpp"
#include "hydra/sim/scene.hpp"

namespace hydra::sim {
namespace {

geo::Camera front_camera() {
    SceneConfig cfg;
    cfg.rig.cameras = 1;
    return make_rig(cfg.rig, cfg.spec).cameras[0];
}

Box make_box(double x, double y, double z, double l, double w, double h, double yaw = 0.0, int cls = 0) {
    Box b;
    b.x = x, b.y = y, b.z = z;
    b.l = l, b.w = w, b.h = h;
    b.yaw = yaw;
    b.cls = cls;
    return b;
}

// ---------------------------------------------------------------- rendering

TEST(RayBox, AxisAlignedHit) {
    const auto b = make_box(10, 0, 0, 1, 1, 1);
    const auto t = ray_box({0, 0, 0}, {1, 0, 0}, b);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(*t, 9.5);
    EXPECT_FALSE(ray_box({0, 0, 0}, {-1, 0, 0}, b));
    EXPECT_FALSE(ray_box({0, 2, 0}, {1, 0, 0}, b));
}

TEST(RayBox, RotatedBoxUsesLocalFrame) {
    // 45 degree yaw: the corner faces the ray at 10 - sqrt(2)/2
    const auto b = make_box(10, 0, 0, 1, 1, 1, M_PI / 4);
    const auto t = ray_box({0, 0, 0}, {1, 0, 0}, b);
    ASSERT_TRUE(t);
    EXPECT_NEAR(*t, 10.0 - std::sqrt(0.5), 1e-12);
}

TEST(RayBox, OriginInsideReturnsZero) {
    const auto t = ray_box({10, 0, 0}, {1, 0, 0}, make_box(10, 0, 0, 1, 1, 1));
    ASSERT_TRUE(t);
    EXPECT_EQ(*t, 0.0);
}

TEST(Render, UnitCubeTenMetresAhead) {
    const auto cam = front_camera();
    const auto cube = make_box(10, 0, 1.5, 1, 1, 1);
    int label = -2;
    const auto d = cast_pixel(std::span<const Box>(&cube, 1), cam, cam.K(0, 2), cam.K(1, 2), &label);
    ASSERT_TRUE(d);
    EXPECT_NEAR(*d, 9.5, 1e-12);
    EXPECT_EQ(label, 0);
}

TEST(Render, EmptySceneAboveHorizonIsInvalid) {
    const auto cam = front_camera();
    const double cy = cam.K(1, 2);
    int label = 0;
    EXPECT_FALSE(cast_pixel({}, cam, 88.0, cy - 0.5, &label));
    EXPECT_EQ(label, kSkyLabel);
    // below the horizon the ground is hit at depth fy * height / (v - cy)
    const auto d = cast_pixel({}, cam, 88.0, cy + 30.0, &label);
    ASSERT_TRUE(d);
    EXPECT_NEAR(*d, cam.K(1, 1) * 1.5 / 30.0, 1e-12);
    EXPECT_EQ(label, kDrivableClass);
}

TEST(Render, NearerBoxOccludes) {
    const auto cam = front_camera();
    std::vector<Box> boxes{make_box(12, 0, 1.5, 2, 2, 2, 0.3, 1), make_box(7, 0, 1.5, 1, 1, 1, 0.0, 2)};
    int label = 0;
    const auto d = cast_pixel(boxes, cam, cam.K(0, 2), cam.K(1, 2), &label);
    ASSERT_TRUE(d);
    const auto near = ray_box({0, 0, 1.5}, {1, 0, 0}, boxes[1]);
    const auto far = ray_box({0, 0, 1.5}, {1, 0, 0}, boxes[0]);
    EXPECT_EQ(*d, std::min(*near, *far));
    EXPECT_EQ(label, 2);
}

// Independent oracle: march a unit ray in 1 cm steps and stop at the first
// sample inside a box or below the ground.
std::optional<double> ray_march(const std::vector<Box>& boxes, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                double max_range) {
    const Eigen::Vector3d d = dir.normalized();
    for (double s = 0.0; s <= max_range; s += 0.01) {
        const Eigen::Vector3d p = origin + s * d;
        if (p.z() <= 0.0) return s;
        for (const auto& b : boxes) {
            const double c = std::cos(b.yaw), sn = std::sin(b.yaw);
            const double dx = p.x() - b.x, dy = p.y() - b.y;
            const double lx = c * dx + sn * dy, ly = -sn * dx + c * dy;
            if (std::fabs(lx) <= 0.5 * b.l && std::fabs(ly) <= 0.5 * b.w && std::fabs(p.z() - b.z) <= 0.5 * b.h) return s;
        }
    }
    return std::nullopt;
}

TEST(Render, AgreesWithRayMarcherOnThousandRays) {
    SceneConfig cfg;
    cfg.min_boxes = 4;
    cfg.max_boxes = 5;
    const auto scene = generate_scene(cfg, 77);
    const auto boxes = boxes_in_ego(scene, 0);
    std::mt19937_64 rng(78);
    std::uniform_real_distribution<double> uu(0.0, scene.spec.image_w()), vv(0.0, scene.spec.image_h());
    int hits = 0;
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto& cam = scene.rig.cameras[k % scene.rig.cameras.size()];
        const double u = uu(rng), v = vv(rng);
        const auto d = cast_pixel(boxes, cam, u, v);
        const Eigen::Matrix4d c2w = cam.cam_to_world();
        const Eigen::Vector3d dir = c2w.topLeftCorner<3, 3>() * (cam.K.inverse() * Eigen::Vector3d(u, v, 1.0));
        const auto m = ray_march(boxes, c2w.topRightCorner<3, 1>(), dir, 40.0);
        if (!d) {
            // sky or beyond the march range
            if (m) EXPECT_GT(*m, 39.0);
            continue;
        }
        const double range = *d * dir.norm();
        if (range > 39.0) continue;
        ASSERT_TRUE(m) << "u=" << u << " v=" << v;
        EXPECT_NEAR(*m, range, 0.02);
        worst = std::max(worst, std::fabs(*m - range));
        ++hits;
    }
    EXPECT_GT(hits, 500);
    RecordProperty("max_abs_error_m", std::to_string(worst));
}

TEST(Render, DepthMapLayoutAndValidity) {
    SceneConfig cfg;
    const auto scene = generate_scene(cfg, 3);
    const auto truth = frame_truth(scene, 0, OccGrid{}, RadarNoise{});
    ASSERT_EQ(truth.depth.size(), 2u);
    for (const auto& m : truth.depth) {
        for (std::size_t i = 0; i < m.depth.size(); ++i) {
            EXPECT_EQ(m.valid[i] != 0, m.depth[i] > 0.0);
            EXPECT_EQ(m.valid[i] == 0, m.semantic[i] == kSkyLabel);
        }
    }
}

TEST(Render, FeatureDepthIsPatchMinimum) {
    geo::FrustumSpec spec;
    DepthMap m;
    m.height = spec.image_h();
    m.width = spec.image_w();
    const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
    m.depth.assign(n, 0.0);
    m.valid.assign(n, 0);
    m.semantic.assign(n, kSkyLabel);
    m.depth[m.index(20, 40)] = 7.0;
    m.valid[m.index(20, 40)] = 1;
    m.depth[m.index(31, 47)] = 5.0;
    m.valid[m.index(31, 47)] = 1;
    const auto f = feature_depth(m, spec);
    const std::size_t cell = 1 * spec.feat_w + 2;
    EXPECT_EQ(f.depth[cell], 5.0);
    EXPECT_EQ(f.valid[cell], 1);
    EXPECT_EQ(std::count(f.valid.begin(), f.valid.end(), 1), 1);
}

TEST(Render, CameraImageChannelsSumToOne) {
    SceneConfig cfg;
    const auto scene = generate_scene(cfg, 4);
    const auto truth = frame_truth(scene, 0, OccGrid{}, RadarNoise{});
    const auto img = camera_image(truth.depth[0], 4);
    ASSERT_EQ(img.size(), 16u * 44u * kImageChannels);
    for (std::size_t p = 0; p < 16u * 44u; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) s += img[p * kImageChannels + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_THROW(camera_image(truth.depth[0], 5), std::invalid_argument);
}

// ---------------------------------------------------------------- radar

double radial_speed_of(const radar::RadarPoint& p) { return (p.vx * p.x + p.vy * p.y) / std::hypot(p.x, p.y); }

TEST(Radar, RecedingBoxRadialSpeed) {
    auto b = make_box(10, 0, 0.5, 1.0, 1e-6, 1.0);
    b.vx = 5.0;
    auto noise = RadarNoise::noiseless();
    noise.points_per_box = 1;
    const auto cloud = simulate_radar(std::span<const Box>(&b, 1), noise, 1);
    ASSERT_EQ(cloud.points.size(), 1u);
    EXPECT_NEAR(radial_speed_of(cloud.points[0]), 5.0, 1e-9);
    EXPECT_NEAR(cloud.points[0].x, 9.5, 1e-9);
    EXPECT_EQ(cloud.points[0].z, 0.0);
}

TEST(Radar, TangentialMotionHasNoRadialSpeed) {
    auto b = make_box(10, 0, 0.5, 1.0, 1e-6, 1.0);
    b.vy = 5.0;
    auto noise = RadarNoise::noiseless();
    const auto cloud = simulate_radar(std::span<const Box>(&b, 1), noise, 2);
    for (const auto& p : cloud.points) EXPECT_NEAR(radial_speed_of(p), 0.0, 1e-6);
}

TEST(Radar, DiagonalMotionProjects) {
    auto b = make_box(10, 0, 0.5, 1.0, 1e-6, 1.0);
    b.vx = 1.0;
    b.vy = 1.0;
    const auto cloud = simulate_radar(std::span<const Box>(&b, 1), RadarNoise::noiseless(), 3);
    for (const auto& p : cloud.points) EXPECT_NEAR(radial_speed_of(p), 1.0, 1e-6);
}

TEST(Radar, NoiselessRadialReconstructionExact) {
    SceneConfig cfg;
    cfg.max_boxes = 5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto scene = generate_scene(cfg, seed);
        const auto boxes = boxes_in_ego(scene, 0);
        auto noise = RadarNoise::noiseless();
        noise.points_per_box = 8;
        const auto cloud = simulate_radar(boxes, noise, seed);
        ASSERT_EQ(cloud.points.size(), boxes.size() * 8);
        for (std::size_t k = 0; k < cloud.points.size(); ++k) {
            const auto& p = cloud.points[k];
            const auto& b = boxes[k / 8];
            const double r = std::hypot(p.x, p.y);
            const double truth = (b.vx * p.x + b.vy * p.y) / r;
            EXPECT_NEAR(radial_speed_of(p), truth, 1e-9);
        }
    }
}

TEST(Radar, PointsLieOnFacingEdges) {
    auto b = make_box(10, 3, 0.5, 4.0, 2.0, 1.5, 0.4);
    auto noise = RadarNoise::noiseless();
    noise.points_per_box = 50;
    const auto cloud = simulate_radar(std::span<const Box>(&b, 1), noise, 4);
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    for (const auto& p : cloud.points) {
        const double dx = p.x - b.x, dy = p.y - b.y;
        const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
        const double on_edge = std::min(std::fabs(std::fabs(lx) - 2.0), std::fabs(std::fabs(ly) - 1.0));
        EXPECT_LT(on_edge, 1e-9);
        // the face's outward normal points at the sensor
        const bool long_side = std::fabs(std::fabs(ly) - 1.0) < 1e-9;
        const double nlx = long_side ? 0.0 : (lx > 0 ? 1.0 : -1.0);
        const double nly = long_side ? (ly > 0 ? 1.0 : -1.0) : 0.0;
        const double nx = c * nlx - s * nly, ny = s * nlx + c * nly;
        EXPECT_GT(-(nx * p.x + ny * p.y), -1e-9);
    }
}

TEST(Radar, GhostsAtDoubleRange) {
    auto b = make_box(8, 0, 0.5, 1, 1, 1);
    RadarNoise noise;
    noise.p_ghost = 1.0;
    noise.points_per_box = 4;
    const auto cloud = simulate_radar(std::span<const Box>(&b, 1), noise, 5);
    ASSERT_EQ(cloud.points.size(), 8u);
    for (std::size_t k = 0; k < 8; k += 2) {
        EXPECT_DOUBLE_EQ(cloud.points[k + 1].x, 2 * cloud.points[k].x);
        EXPECT_DOUBLE_EQ(cloud.points[k + 1].vx, cloud.points[k].vx);
    }
}

// ---------------------------------------------------------------- occupancy

TEST(Occupancy, BoxSpanningTwoVoxels) {
    OccGrid g;
    const auto b = make_box(8.0, 0.4, 0.4, 1.6, 0.8, 0.8, 0.0, 3);
    const auto labels = voxelize_gt_occupancy(std::span<const Box>(&b, 1), g);
    std::size_t n = 0;
    for (int i = 0; i < g.bev.nx; ++i)
        for (int j = 0; j < g.bev.ny; ++j)
            for (int k = 0; k < g.nz; ++k)
                if (labels[g.index(i, j, k)] == 3) {
                    ++n;
                    EXPECT_EQ(k, 1);
                    EXPECT_EQ(j, 16);
                    EXPECT_TRUE(i == 9 || i == 10);
                }
    EXPECT_EQ(n, 2u);
}

TEST(Occupancy, EmptySceneIsGroundAndFree) {
    OccGrid g;
    const auto labels = voxelize_gt_occupancy({}, g);
    for (int i = 0; i < g.bev.nx; ++i)
        for (int j = 0; j < g.bev.ny; ++j)
            for (int k = 0; k < g.nz; ++k) EXPECT_EQ(labels[g.index(i, j, k)], k == 0 ? kDrivableClass : kFreeClass);
}

TEST(Occupancy, OverlapGoesToNearerCentre) {
    OccGrid g;
    // voxel (10, 16, 1) has centre (8.4, 0.4, 0.4)
    std::vector<Box> boxes{make_box(7.9, 0.4, 0.4, 2.0, 0.8, 0.8, 0.0, 0), make_box(8.6, 0.4, 0.4, 2.0, 0.8, 0.8, 0.0, 2)};
    const auto labels = voxelize_gt_occupancy(boxes, g);
    EXPECT_EQ(labels[g.index(10, 16, 1)], 2);
    EXPECT_EQ(labels[g.index(9, 16, 1)], 0);
    // exact tie keeps the earlier box; unit voxels keep the distances exact
    OccGrid unit;
    unit.bev.resolution = 1.0;
    unit.bev.origin_y = -16.0;
    unit.z_min = -1.0;
    unit.dz = 1.0;
    std::vector<Box> tie{make_box(8.0, 0.5, 0.5, 2.0, 1.0, 1.0, 0.0, 1), make_box(9.0, 0.5, 0.5, 2.0, 1.0, 1.0, 0.0, 3)};
    EXPECT_EQ(voxelize_gt_occupancy(tie, unit)[unit.index(8, 16, 1)], 1);
    std::swap(tie[0], tie[1]);
    EXPECT_EQ(voxelize_gt_occupancy(tie, unit)[unit.index(8, 16, 1)], 3);
}

TEST(Occupancy, CountScalesWithVolume) {
    OccGrid g;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> size(0.9, 5.0), pos(5.0, 15.0);
    for (int trial = 0; trial < 200; ++trial) {
        auto b = make_box(pos(rng), pos(rng) - 10.0, 0.0, size(rng), size(rng), size(rng) * 0.5, 0.0, 1);
        b.z = 0.5 * b.h;
        const auto labels = voxelize_gt_occupancy(std::span<const Box>(&b, 1), g);
        const auto n = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
        const double ex = b.l / 0.8, ey = b.w / 0.8, ez = b.h / 0.8;
        EXPECT_LE(n, (ex + 1) * (ey + 1) * (ez + 1));
        EXPECT_GE(n, std::max(0.0, ex - 1) * std::max(0.0, ey - 1) * std::max(0.0, ez - 1));
    }
}

// ---------------------------------------------------------------- scenes

TEST(Scene, SeedDeterminesEverything) {
    SceneConfig cfg;
    const auto a = generate_scene(cfg, 123), b = generate_scene(cfg, 123);
    EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
    const auto ta = frame_truth(a, 1, OccGrid{}, RadarNoise{});
    const auto tb = frame_truth(b, 1, OccGrid{}, RadarNoise{});
    ASSERT_EQ(ta.radar.points.size(), tb.radar.points.size());
    for (std::size_t i = 0; i < ta.radar.points.size(); ++i) {
        EXPECT_EQ(ta.radar.points[i].x, tb.radar.points[i].x);
        EXPECT_EQ(ta.radar.points[i].vy, tb.radar.points[i].vy);
    }
    EXPECT_EQ(ta.occupancy, tb.occupancy);
    EXPECT_EQ(ta.depth[0].depth, tb.depth[0].depth);
    EXPECT_NE(scene_to_json(generate_scene(cfg, 124)).dump(), scene_to_json(a).dump());
}

TEST(Scene, BoxesRespectBoundsAndSeparation) {
    SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = generate_scene(cfg, seed);
        EXPECT_GE(static_cast<int>(s.boxes.size()), cfg.min_boxes);
        EXPECT_LE(static_cast<int>(s.boxes.size()), cfg.max_boxes);
        for (const auto& b : s.boxes) {
            EXPECT_GE(b.x, cfg.x_min);
            EXPECT_LE(b.x, cfg.x_max);
            EXPECT_LE(std::fabs(b.y), 11.0);
            EXPECT_GT(b.l, 0.0);
        }
    }
}

TEST(Scene, JsonRoundTripIsExact) {
    const auto a = generate_scene(SceneConfig{}, 9);
    const auto b = scene_from_json(nlohmann::json::parse(scene_to_json(a).dump()));
    EXPECT_EQ(scene_to_json(a).dump(), scene_to_json(b).dump());
    ASSERT_EQ(a.boxes.size(), b.boxes.size());
    EXPECT_EQ(a.boxes[0].yaw, b.boxes[0].yaw);
}

TEST(Scene, EgoFrameTransformIsConsistent) {
    SceneConfig cfg;
    cfg.frames = 3;
    const auto s = generate_scene(cfg, 10);
    for (int f = 0; f < 3; ++f) {
        const auto boxes = boxes_in_ego(s, f);
        for (std::size_t k = 0; k < boxes.size(); ++k) {
            const auto w = ego_to_world(s.ego[f], boxes[k].x, boxes[k].y);
            EXPECT_NEAR(w.x(), s.boxes[k].x + s.boxes[k].vx * f * s.dt, 1e-9);
            EXPECT_NEAR(w.y(), s.boxes[k].y + s.boxes[k].vy * f * s.dt, 1e-9);
        }
    }
    const auto rel = relative_pose(s.ego[0], s.ego[1]);
    const auto p = ego_to_world(s.ego[0], rel.x, rel.y);
    EXPECT_NEAR(p.x(), s.ego[1].x, 1e-12);
    EXPECT_NEAR(p.y(), s.ego[1].y, 1e-12);
}

// ---------------------------------------------------------------- metrics

Detection as_det(const Box& b, double score = 0.9) { return {b, score}; }

std::vector<Box> some_truth() {
    std::vector<Box> t{make_box(5, 0, 0.75, 4, 2, 1.5, 0, 0), make_box(10, 3, 0.8, 0.7, 0.7, 1.7, 0, 2),
                       make_box(12, -4, 1.5, 6, 2.5, 3, 0, 1)};
    for (int i = 0; i < 3; ++i) t[i].id = i;
    return t;
}

TEST(Metrics, PerfectPredictions) {
    const auto truth = some_truth();
    std::vector<Detection> preds;
    for (const auto& b : truth) preds.push_back(as_det(b));
    std::vector<FrameEval> frames{{preds, truth}};
    EXPECT_EQ(mate_like(frames).value, 0.0);
    EXPECT_DOUBLE_EQ(map_lite(frames).value, 1.0);

    std::vector<int> labels{0, 4, 5, 5, 2, 1};
    EXPECT_EQ(miou(labels, labels).miou.value, 1.0);

    std::vector<TrackedFrame> seq;
    for (int f = 0; f < 3; ++f) seq.push_back({preds, {0, 1, 2}, truth});
    const auto m = mota_lite(seq);
    EXPECT_EQ(m.mota.value, 1.0);
    EXPECT_EQ(m.id_switches, 0u);

    std::vector<double> d{2.0, 5.0};
    std::vector<std::uint8_t> v{1, 1};
    EXPECT_EQ(depth_abs_rel(d, d, v).value, 0.0);
}

TEST(Metrics, OneMetreShiftGivesMateOne) {
    const auto truth = some_truth();
    std::vector<Detection> preds;
    for (const auto& b : truth) {
        auto s = b;
        s.x += 0.6;
        s.y -= 0.8;
        preds.push_back(as_det(s));
    }
    std::vector<FrameEval> frames{{preds, truth}};
    EXPECT_NEAR(mate_like(frames).value, 1.0, 1e-12);
}

TEST(Metrics, NoPredictions) {
    const auto truth = some_truth();
    std::vector<FrameEval> frames{{{}, truth}};
    EXPECT_EQ(map_lite(frames).value, 0.0);
    EXPECT_FALSE(mate_like(frames).defined);
    std::vector<TrackedFrame> seq{{{}, {}, truth}};
    const auto m = mota_lite(seq);
    EXPECT_EQ(m.fn, truth.size());
    EXPECT_EQ(m.mota.value, 0.0);
}

TEST(Metrics, EmptyTruthIsFlaggedNotNaN) {
    std::vector<FrameEval> frames{{{as_det(make_box(1, 1, 1, 1, 1, 1))}, {}}};
    EXPECT_FALSE(map_lite(frames).defined);
    EXPECT_FALSE(mota_lite(std::vector<TrackedFrame>{{}}).mota.defined);
    std::vector<double> d{1.0};
    std::vector<std::uint8_t> v{0};
    EXPECT_FALSE(depth_abs_rel(d, d, v).defined);
    std::vector<int> free_only{5, 5};
    EXPECT_FALSE(miou(free_only, free_only).miou.defined);
    EXPECT_TRUE(to_json(Metric::undefined()).is_null());
}

TEST(Metrics, MiouExcludesFree) {
    std::vector<int> truth{0, 0, 5, 5, 4};
    std::vector<int> pred{0, 5, 5, 5, 4};
    const auto r = miou(pred, truth);
    EXPECT_DOUBLE_EQ(r.per_class[0].value, 0.5);
    EXPECT_FALSE(r.per_class[5].defined);
    EXPECT_DOUBLE_EQ(r.miou.value, 0.75);
}

TEST(Metrics, IdSwitchCounted) {
    const auto truth = some_truth();
    std::vector<Detection> preds;
    for (const auto& b : truth) preds.push_back(as_det(b));
    std::vector<TrackedFrame> seq{{preds, {0, 1, 2}, truth}, {preds, {0, 7, 2}, truth}};
    const auto m = mota_lite(seq);
    EXPECT_EQ(m.id_switches, 1u);
    EXPECT_NEAR(m.mota.value, 1.0 - 1.0 / 6.0, 1e-12);
}

TEST(Metrics, MapHalfPrecision) {
    // one GT, a higher-scoring FP then the TP: precision at full recall is 1/2
    auto gt = make_box(5, 0, 0, 1, 1, 1, 0, 0);
    std::vector<FrameEval> frames{{{as_det(make_box(20, 0, 0, 1, 1, 1), 0.9), as_det(gt, 0.5)}, {gt}}};
    EXPECT_DOUBLE_EQ(map_lite(frames).value, 0.5);
}

}  // namespace
}  // namespace hydra::sim
