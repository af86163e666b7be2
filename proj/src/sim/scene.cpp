#include "hydra/sim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "hydra/geometry/rig_io.hpp"
#include "hydra/io.hpp"

namespace hydra::sim {

namespace {

struct ClassPrior {
    double l, w, h;
    double max_speed;
    double weight;
};

constexpr std::array<ClassPrior, kObjectClasses> kPriors{{
    {4.2, 1.8, 1.5, 8.0, 0.45},   // car
    {6.5, 2.5, 3.0, 6.0, 0.15},   // truck
    {0.7, 0.7, 1.75, 1.5, 0.20},  // pedestrian
    {1.8, 0.7, 1.6, 5.0, 0.20},   // cyclist
}};

double footprint_radius(const Box& b) { return 0.5 * std::hypot(b.l, b.w); }

}  // namespace

geo::CameraRig make_rig(const RigConfig& config, const geo::FrustumSpec& spec) {
    if (config.cameras < 1) throw std::invalid_argument("rig: need at least one camera");
    geo::CameraRig rig;
    const int w = spec.image_w(), h = spec.image_h();
    const double cx = 0.5 * w;
    for (int k = 0; k < config.cameras; ++k) {
        const double t = config.cameras == 1 ? 0.0 : 2.0 * k / (config.cameras - 1) - 1.0;
        // camera 0 looks left (positive yaw)
        const double yaw = -config.yaw_spread * t;
        rig.cameras.push_back(
            geo::make_mounted_camera(config.fx, config.fy, cx, config.cy, w, h, yaw, config.mount_height));
    }
    return rig;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
    if (config.frames < 1) throw std::invalid_argument("scene: frames must be >= 1");
    if (config.min_boxes < 0 || config.max_boxes < config.min_boxes) {
        throw std::invalid_argument("scene: bad box count range");
    }
    geo::validate(config.spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    Scene scene;
    scene.seed = seed;
    scene.dt = config.dt;
    scene.spec = config.spec;
    scene.rig = make_rig(config.rig, config.spec);

    const int n = config.min_boxes + static_cast<int>(unit(rng) * (config.max_boxes - config.min_boxes + 1));
    const int count = std::min(n, config.max_boxes);
    for (int attempt = 0; static_cast<int>(scene.boxes.size()) < count && attempt < 200; ++attempt) {
        double acc = 0.0, pick = unit(rng);
        int cls = kObjectClasses - 1;
        for (int c = 0; c < kObjectClasses; ++c) {
            acc += kPriors[c].weight;
            if (pick < acc) {
                cls = c;
                break;
            }
        }
        const auto& prior = kPriors[cls];
        Box b;
        b.cls = cls;
        b.l = prior.l * uniform(0.9, 1.1);
        b.w = prior.w * uniform(0.9, 1.1);
        b.h = prior.h * uniform(0.9, 1.1);
        b.x = uniform(config.x_min, config.x_max);
        const double bearing = uniform(-config.max_bearing, config.max_bearing);
        b.y = b.x * std::tan(bearing);
        b.z = 0.5 * b.h;
        b.yaw = uniform(-M_PI, M_PI);
        const double speed = uniform(0.0, prior.max_speed);
        b.vx = speed * std::cos(b.yaw);
        b.vy = speed * std::sin(b.yaw);
        if (std::fabs(b.y) > 11.0) continue;
        bool clear = true;
        for (const auto& o : scene.boxes) {
            if (std::hypot(o.x - b.x, o.y - b.y) < footprint_radius(o) + footprint_radius(b) + 0.5) {
                clear = false;
                break;
            }
        }
        if (!clear) continue;
        b.id = static_cast<int>(scene.boxes.size());
        scene.boxes.push_back(b);
    }

    const double speed = uniform(0.0, config.max_ego_speed);
    const double yaw_rate = uniform(-config.max_yaw_rate, config.max_yaw_rate);
    Pose2 pose;
    for (int f = 0; f < config.frames; ++f) {
        scene.ego.push_back(pose);
        pose.x += speed * std::cos(pose.yaw) * config.dt;
        pose.y += speed * std::sin(pose.yaw) * config.dt;
        pose.yaw += yaw_rate * config.dt;
    }
    return scene;
}

std::vector<Box> boxes_in_ego(const Scene& scene, int frame) {
    if (frame < 0 || frame >= scene.frames()) throw std::out_of_range("scene: frame out of range");
    const auto& ego = scene.ego[frame];
    const double t = frame * scene.dt;
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    std::vector<Box> out;
    out.reserve(scene.boxes.size());
    for (const auto& b : scene.boxes) {
        Box e = b;
        const double wx = b.x + b.vx * t - ego.x;
        const double wy = b.y + b.vy * t - ego.y;
        e.x = c * wx + s * wy;
        e.y = -s * wx + c * wy;
        e.yaw = std::remainder(b.yaw - ego.yaw, 2.0 * M_PI);
        e.vx = c * b.vx + s * b.vy;
        e.vy = -s * b.vx + c * b.vy;
        out.push_back(e);
    }
    return out;
}

Pose2 relative_pose(const Pose2& prev, const Pose2& cur) {
    const double c = std::cos(prev.yaw), s = std::sin(prev.yaw);
    const double dx = cur.x - prev.x, dy = cur.y - prev.y;
    return {c * dx + s * dy, -s * dx + c * dy, std::remainder(cur.yaw - prev.yaw, 2.0 * M_PI)};
}

Eigen::Vector2d ego_to_world(const Pose2& ego, double x, double y) {
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    return {ego.x + c * x - s * y, ego.y + s * x + c * y};
}

// ------------------------------------------------------------------ JSON

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : scene.boxes) {
        boxes.push_back({{"id", b.id},
                         {"class", std::string(kClassNames[b.cls])},
                         {"center", {b.x, b.y, b.z}},
                         {"size", {b.l, b.w, b.h}},
                         {"yaw", b.yaw},
                         {"velocity", {b.vx, b.vy}}});
    }
    nlohmann::json ego = nlohmann::json::array();
    for (const auto& p : scene.ego) ego.push_back({p.x, p.y, p.yaw});
    const auto& sp = scene.spec;
    return {{"seed", scene.seed},
            {"dt", scene.dt},
            {"boxes", boxes},
            {"ego", ego},
            {"rig", geo::rig_to_json(scene.rig)},
            {"frustum",
             {{"feat_h", sp.feat_h},
              {"feat_w", sp.feat_w},
              {"depth_bins", sp.depth_bins},
              {"d_min", sp.d_min},
              {"d_step", sp.d_step},
              {"downsample", sp.downsample}}}};
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    scene.seed = j.at("seed").get<std::uint64_t>();
    scene.dt = j.at("dt").get<double>();
    for (const auto& jb : j.at("boxes")) {
        Box b;
        b.id = jb.at("id").get<int>();
        const auto name = jb.at("class").get<std::string>();
        const auto it = std::find(kClassNames.begin(), kClassNames.begin() + kObjectClasses, name);
        if (it == kClassNames.begin() + kObjectClasses) throw std::invalid_argument("scene: unknown class " + name);
        b.cls = static_cast<int>(it - kClassNames.begin());
        const auto c = jb.at("center").get<std::vector<double>>();
        const auto s = jb.at("size").get<std::vector<double>>();
        const auto v = jb.at("velocity").get<std::vector<double>>();
        if (c.size() != 3 || s.size() != 3 || v.size() != 2) throw std::invalid_argument("scene: bad box arrays");
        if (!(s[0] > 0 && s[1] > 0 && s[2] > 0)) throw std::invalid_argument("scene: box sizes must be positive");
        b.x = c[0], b.y = c[1], b.z = c[2];
        b.l = s[0], b.w = s[1], b.h = s[2];
        b.yaw = jb.at("yaw").get<double>();
        b.vx = v[0], b.vy = v[1];
        scene.boxes.push_back(b);
    }
    for (const auto& jp : j.at("ego")) {
        const auto p = jp.get<std::vector<double>>();
        if (p.size() != 3) throw std::invalid_argument("scene: ego pose needs 3 values");
        scene.ego.push_back({p[0], p[1], p[2]});
    }
    scene.rig = geo::rig_from_json(j.at("rig"));
    const auto& f = j.at("frustum");
    scene.spec.feat_h = f.at("feat_h");
    scene.spec.feat_w = f.at("feat_w");
    scene.spec.depth_bins = f.at("depth_bins");
    scene.spec.d_min = f.at("d_min");
    scene.spec.d_step = f.at("d_step");
    scene.spec.downsample = f.at("downsample");
    geo::validate(scene.spec);
    return scene;
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
    io::atomic_write(path, scene_to_json(scene).dump(1) + "\n");
}

Scene load_scene(const std::filesystem::path& path) { return scene_from_json(nlohmann::json::parse(io::read_file(path))); }

}  // namespace hydra::sim
