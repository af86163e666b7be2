#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/radar/pillars.hpp"
#include "hydra/types.hpp"

namespace hydra::sim {

/// Planar pose of the ego vehicle in the world frame.
struct Pose2 {
    double x = 0.0, y = 0.0, yaw = 0.0;
};

struct RigConfig {
    int cameras = 2;
    double fx = 120.0, fy = 120.0;
    double cy = 16.0;  // principal row; a high horizon leaves most rows on the ground
    double mount_height = 1.5;
    double yaw_spread = 0.55;  // camera k looks along yaw_spread * (k - (n-1)/2) * 2 / max(n-1, 1)
};

geo::CameraRig make_rig(const RigConfig& config, const geo::FrustumSpec& spec);

struct SceneConfig {
    int frames = 2;
    double dt = 0.5;
    int min_boxes = 2;
    int max_boxes = 5;
    double x_min = 4.0, x_max = 15.0;  // box centres, ego frame at frame 0
    double max_bearing = 0.95;         // |atan2(y, x)| for box centres (radians)
    double max_ego_speed = 4.0;
    double max_yaw_rate = 0.1;
    RigConfig rig;
    geo::FrustumSpec spec;
};

struct Scene {
    std::uint64_t seed = 0;
    double dt = 0.5;
    std::vector<Box> boxes;  // world frame at t = 0; ids are 0..n-1
    std::vector<Pose2> ego;  // one pose per frame
    geo::CameraRig rig;      // cameras in the ego frame
    geo::FrustumSpec spec;

    int frames() const { return static_cast<int>(ego.size()); }
};

/// Seed fully determines the result.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// World-frame boxes advanced to `frame`, expressed in that frame's ego
/// coordinates (positions, yaw and velocity rotated; velocity stays absolute).
std::vector<Box> boxes_in_ego(const Scene& scene, int frame);

/// Pose of frame `cur`'s ego in frame `prev`'s ego coordinates.
Pose2 relative_pose(const Pose2& prev, const Pose2& cur);
/// Ego-frame point at `frame` mapped to world coordinates.
Eigen::Vector2d ego_to_world(const Pose2& ego, double x, double y);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Depth rendering
// ---------------------------------------------------------------------------

/// Ray parameter of the first entry into an oriented box (slab method);
/// nullopt for a miss or when the box lies entirely behind the origin.
/// A ray starting inside the box returns 0.
std::optional<double> ray_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Box& box);

inline constexpr int kSkyLabel = -1;

struct DepthMap {
    int height = 0, width = 0;
    std::vector<double> depth;         // camera-frame z, 0 where invalid
    std::vector<int> semantic;         // class id, kDrivableClass for ground, kSkyLabel for no hit
    std::vector<std::uint8_t> valid;

    std::size_t index(int v, int u) const { return static_cast<std::size_t>(v) * width + u; }
};

/// Casts one ray through each pixel centre against every box and the
/// ground plane z = 0; nearest hit wins.
DepthMap render_depth(std::span<const Box> boxes_ego, const geo::Camera& cam);

/// Nearest hit along the camera ray through (u, v), as camera-frame depth.
std::optional<double> cast_pixel(std::span<const Box> boxes_ego, const geo::Camera& cam, double u, double v,
                                 int* label = nullptr);

// ---------------------------------------------------------------------------
// Radar
// ---------------------------------------------------------------------------

struct RadarNoise {
    double sigma_range = 0.3;       // m
    double sigma_azimuth_deg = 0.5;
    double p_ghost = 0.05;
    double sigma_rcs = 1.0;         // dB
    int points_per_box = 3;
    bool enabled = true;            // false: exact positions, no ghosts

    static RadarNoise noiseless() {
        RadarNoise n;
        n.enabled = false;
        return n;
    }
};

/// Sensor at the ego origin. Points sit on the box edges facing the
/// sensor at z = 0; (vx, vy) is the radial component of the box velocity
/// along the measured bearing. Ghosts repeat a real return at twice its
/// range with the same bearing and velocity.
radar::RadarPointCloud simulate_radar(std::span<const Box> boxes_ego, const RadarNoise& noise, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Occupancy
// ---------------------------------------------------------------------------

struct OccGrid {
    geo::BevGrid bev;
    int nz = 4;
    double z_min = -0.8;  // layer 0 is [z_min, z_min + dz), the ground layer
    double dz = 0.8;

    std::size_t voxels() const { return static_cast<std::size_t>(bev.cells()) * nz; }
    std::size_t index(int i, int j, int k) const { return static_cast<std::size_t>(bev.flat(i, j)) * nz + k; }
    double z_center(int k) const { return z_min + (k + 0.5) * dz; }
};

/// Voxel (i, j, k) takes the class of a box containing its centre; ties go
/// to the box with the nearest centre (then the lower list index). Layer 0
/// voxels not claimed by a box are drivable, the rest free.
std::vector<int> voxelize_gt_occupancy(std::span<const Box> boxes_ego, const OccGrid& grid);

// ---------------------------------------------------------------------------
// Frame truth
// ---------------------------------------------------------------------------

struct FrameTruth {
    std::vector<Box> boxes;          // ego frame, ids from the scene
    std::vector<DepthMap> depth;     // one per camera
    radar::RadarPointCloud radar;
    std::vector<int> occupancy;      // OccGrid layout
};

FrameTruth frame_truth(const Scene& scene, int frame, const OccGrid& grid, const RadarNoise& noise);

/// Network image input: per camera, `pool` x `pool` area-averaged planes
/// of semantic one-hots {car, truck, pedestrian, cyclist, ground, sky}
/// plus the normalized row coordinate. Shape [H / pool, W / pool, 7].
inline constexpr std::size_t kImageChannels = 7;
std::vector<double> camera_image(const DepthMap& map, int pool);

/// Per feature pixel (downsample x downsample patch): nearest valid depth
/// in the patch; valid only when some pixel in the patch is.
struct FeatureDepth {
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;
};
FeatureDepth feature_depth(const DepthMap& map, const geo::FrustumSpec& spec);

}  // namespace hydra::sim
