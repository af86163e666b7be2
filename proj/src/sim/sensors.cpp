#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hydra/sim/scene.hpp"

namespace hydra::sim {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::array<double, kObjectClasses> kRcs{10.0, 15.0, -5.0, 0.0};

}  // namespace

std::optional<double> ray_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Box& box) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Eigen::Vector3d rel = origin - Eigen::Vector3d(box.x, box.y, box.z);
    const Eigen::Vector3d p(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
    const Eigen::Vector3d d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
    const Eigen::Vector3d half(0.5 * box.l, 0.5 * box.w, 0.5 * box.h);
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (std::fabs(p[a]) > half[a]) return std::nullopt;
            continue;
        }
        double t0 = (-half[a] - p[a]) / d[a];
        double t1 = (half[a] - p[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return std::nullopt;
    }
    if (t_far < 0.0) return std::nullopt;
    return std::max(t_near, 0.0);
}

std::optional<double> cast_pixel(std::span<const Box> boxes_ego, const geo::Camera& cam, double u, double v,
                                 int* label) {
    const Eigen::Matrix4d c2w = cam.cam_to_world();
    const Eigen::Vector3d origin = c2w.topRightCorner<3, 1>();
    // Scaled so the ray parameter equals camera-frame depth.
    const Eigen::Vector3d ray_cam = cam.K.inverse() * Eigen::Vector3d(u, v, 1.0);
    const Eigen::Vector3d dir = c2w.topLeftCorner<3, 3>() * ray_cam;

    double best = std::numeric_limits<double>::infinity();
    int best_label = kSkyLabel;
    if (dir.z() < 0.0) {
        const double t = -origin.z() / dir.z();
        if (t > 0.0) {
            best = t;
            best_label = kDrivableClass;
        }
    }
    for (const auto& b : boxes_ego) {
        const auto t = ray_box(origin, dir, b);
        if (t && *t > 0.0 && *t < best) {
            best = *t;
            best_label = b.cls;
        }
    }
    if (label) *label = best_label;
    if (best_label == kSkyLabel) return std::nullopt;
    return best;
}

DepthMap render_depth(std::span<const Box> boxes_ego, const geo::Camera& cam) {
    DepthMap m;
    m.height = cam.height_px;
    m.width = cam.width_px;
    const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
    m.depth.assign(n, 0.0);
    m.semantic.assign(n, kSkyLabel);
    m.valid.assign(n, 0);
    for (int v = 0; v < m.height; ++v) {
        for (int u = 0; u < m.width; ++u) {
            int label = kSkyLabel;
            const auto d = cast_pixel(boxes_ego, cam, u + 0.5, v + 0.5, &label);
            const auto i = m.index(v, u);
            m.semantic[i] = label;
            if (d) {
                m.depth[i] = *d;
                m.valid[i] = 1;
            }
        }
    }
    return m;
}

radar::RadarPointCloud simulate_radar(std::span<const Box> boxes_ego, const RadarNoise& noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma_az = noise.sigma_azimuth_deg * M_PI / 180.0;

    radar::RadarPointCloud cloud;
    for (const auto& b : boxes_ego) {
        const double c = std::cos(b.yaw), s = std::sin(b.yaw);
        std::array<Eigen::Vector2d, 4> corner;
        const double hl = 0.5 * b.l, hw = 0.5 * b.w;
        const std::array<std::pair<double, double>, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
        for (int k = 0; k < 4; ++k) {
            corner[k] = {b.x + c * local[k].first - s * local[k].second, b.y + s * local[k].first + c * local[k].second};
        }
        // Edges whose outward normal points at the sensor.
        std::vector<std::pair<int, double>> edges;
        double total = 0.0;
        const Eigen::Vector2d centre(b.x, b.y);
        for (int k = 0; k < 4; ++k) {
            const Eigen::Vector2d a = corner[k], e = corner[(k + 1) % 4];
            const Eigen::Vector2d mid = 0.5 * (a + e);
            const Eigen::Vector2d normal_out = mid - centre;
            if (normal_out.dot(-mid) > 0.0) {
                const double len = (e - a).norm();
                edges.emplace_back(k, len);
                total += len;
            }
        }
        if (edges.empty()) continue;  // sensor inside the footprint
        for (int n = 0; n < noise.points_per_box; ++n) {
            double pick = unit(rng) * total;
            int edge = edges.back().first;
            for (const auto& [k, len] : edges) {
                if (pick < len) {
                    edge = k;
                    break;
                }
                pick -= len;
            }
            const double t = unit(rng);
            const Eigen::Vector2d p = corner[edge] + t * (corner[(edge + 1) % 4] - corner[edge]);
            double range = p.norm();
            double az = std::atan2(p.y(), p.x());
            const double v_r = (b.vx * p.x() + b.vy * p.y()) / range;
            double rcs = kRcs[b.cls];
            if (noise.enabled) {
                range = std::max(0.1, range + noise.sigma_range * normal(rng));
                az += sigma_az * normal(rng);
                rcs += noise.sigma_rcs * normal(rng);
            }
            radar::RadarPoint pt;
            const double ca = std::cos(az), sa = std::sin(az);
            pt.x = range * ca;
            pt.y = range * sa;
            pt.z = 0.0;
            pt.rcs = rcs;
            pt.vx = v_r * ca;
            pt.vy = v_r * sa;
            cloud.points.push_back(pt);
            if (noise.enabled && unit(rng) < noise.p_ghost) {
                radar::RadarPoint ghost = pt;
                ghost.x = 2.0 * pt.x;
                ghost.y = 2.0 * pt.y;
                ghost.rcs = rcs - 10.0;
                cloud.points.push_back(ghost);
            }
        }
    }
    return cloud;
}

std::vector<int> voxelize_gt_occupancy(std::span<const Box> boxes_ego, const OccGrid& grid) {
    geo::validate(grid.bev);
    if (grid.nz < 1 || !(grid.dz > 0.0)) throw std::invalid_argument("occupancy: bad vertical layout");
    std::vector<int> labels(grid.voxels(), kFreeClass);
    std::vector<double> claim_dist(grid.voxels(), std::numeric_limits<double>::infinity());
    for (int i = 0; i < grid.bev.nx; ++i) {
        for (int j = 0; j < grid.bev.ny; ++j) labels[grid.index(i, j, 0)] = kDrivableClass;
    }
    const auto& g = grid.bev;
    for (const auto& b : boxes_ego) {
        const double c = std::cos(b.yaw), s = std::sin(b.yaw);
        const double r = 0.5 * std::hypot(b.l, b.w);
        const int i0 = std::max(0, static_cast<int>(std::floor((b.x - r - g.origin_x) / g.resolution)));
        const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((b.x + r - g.origin_x) / g.resolution)));
        const int j0 = std::max(0, static_cast<int>(std::floor((b.y - r - g.origin_y) / g.resolution)));
        const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((b.y + r - g.origin_y) / g.resolution)));
        for (int i = i0; i <= i1; ++i) {
            for (int j = j0; j <= j1; ++j) {
                const auto cc = g.cell_center(i, j);
                const double dx = cc.x() - b.x, dy = cc.y() - b.y;
                const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
                if (std::fabs(lx) > 0.5 * b.l || std::fabs(ly) > 0.5 * b.w) continue;
                for (int k = 0; k < grid.nz; ++k) {
                    const double dz = grid.z_center(k) - b.z;
                    if (std::fabs(dz) > 0.5 * b.h) continue;
                    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                    const auto idx = grid.index(i, j, k);
                    // strict: an earlier box keeps an exact tie
                    if (dist < claim_dist[idx]) {
                        claim_dist[idx] = dist;
                        labels[idx] = b.cls;
                    }
                }
            }
        }
    }
    return labels;
}

FrameTruth frame_truth(const Scene& scene, int frame, const OccGrid& grid, const RadarNoise& noise) {
    FrameTruth t;
    t.boxes = boxes_in_ego(scene, frame);
    for (const auto& cam : scene.rig.cameras) t.depth.push_back(render_depth(t.boxes, cam));
    t.radar = simulate_radar(t.boxes, noise, mix(scene.seed, static_cast<std::uint64_t>(frame)));
    t.occupancy = voxelize_gt_occupancy(t.boxes, grid);
    return t;
}

std::vector<double> camera_image(const DepthMap& map, int pool) {
    if (pool < 1 || map.height % pool != 0 || map.width % pool != 0) {
        throw std::invalid_argument("camera_image: pool must divide the image size");
    }
    const int h = map.height / pool, w = map.width / pool;
    std::vector<double> img(static_cast<std::size_t>(h) * w * kImageChannels, 0.0);
    const double inv = 1.0 / (pool * pool);
    for (int v = 0; v < map.height; ++v) {
        for (int u = 0; u < map.width; ++u) {
            const int label = map.semantic[map.index(v, u)];
            const int ch = label == kSkyLabel ? 5 : (label == kDrivableClass ? 4 : label);
            img[((static_cast<std::size_t>(v / pool) * w) + u / pool) * kImageChannels + ch] += inv;
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            img[((static_cast<std::size_t>(r) * w) + c) * kImageChannels + 6] = (r + 0.5) / h;
        }
    }
    return img;
}

FeatureDepth feature_depth(const DepthMap& map, const geo::FrustumSpec& spec) {
    if (map.height != spec.image_h() || map.width != spec.image_w()) {
        throw std::invalid_argument("feature_depth: map size does not match the frustum spec");
    }
    FeatureDepth out;
    const std::size_t n = static_cast<std::size_t>(spec.feat_h) * spec.feat_w;
    out.depth.assign(n, std::numeric_limits<double>::infinity());
    out.valid.assign(n, 0);
    for (int v = 0; v < map.height; ++v) {
        for (int u = 0; u < map.width; ++u) {
            const auto i = map.index(v, u);
            if (!map.valid[i]) continue;
            const std::size_t f = static_cast<std::size_t>(v / spec.downsample) * spec.feat_w + u / spec.downsample;
            out.depth[f] = std::min(out.depth[f], map.depth[i]);
            out.valid[f] = 1;
        }
    }
    for (std::size_t f = 0; f < n; ++f) {
        if (!out.valid[f]) out.depth[f] = 0.0;
    }
    return out;
}

}  // namespace hydra::sim
