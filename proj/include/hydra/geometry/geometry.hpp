#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Camera frame convention: right-handed, z forward, x right, y down.
// Ego/world frame: x forward, y left, z up.

namespace hydra::geo {

struct Camera {
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
    int height_px = 0;
    int width_px = 0;

    Eigen::Matrix4d cam_to_world() const;
    Eigen::Vector3d center_world() const;
};

/// Throws std::invalid_argument unless K is upper-triangular with positive
/// focal lengths and world_to_cam is a proper rigid transform.
void validate(const Camera& cam);

struct CameraRig {
    std::vector<Camera> cameras;
};

/// Pinhole camera mounted on the ego vehicle at (x, y, height), looking
/// along ego yaw `yaw` (radians, CCW from +x) with zero pitch and roll.
Camera make_mounted_camera(double fx, double fy, double cx, double cy, int width_px, int height_px,
                           double yaw, double height, double x = 0.0, double y = 0.0);

struct FrustumSpec {
    int feat_h = 4;
    int feat_w = 11;
    int depth_bins = 30;
    double d_min = 1.0;
    double d_step = 0.5;
    int downsample = 16;

    double bin_center(int k) const { return d_min + k * d_step; }
    double last_center() const { return bin_center(depth_bins - 1); }
    int image_h() const { return feat_h * downsample; }
    int image_w() const { return feat_w * downsample; }
};

void validate(const FrustumSpec& spec);

/// Half-open metric cells: cell (i, j) covers
/// [origin_x + i*res, origin_x + (i+1)*res) x [origin_y + j*res, ...).
struct BevGrid {
    int nx = 32;
    int ny = 32;
    double resolution = 0.8;
    double origin_x = 0.0;
    double origin_y = -12.8;
    std::vector<double> z_ref_heights{-0.5, 0.5, 1.5, 2.5};

    int cells() const { return nx * ny; }
    int flat(int i, int j) const { return i * ny + j; }
    std::optional<std::pair<int, int>> cell_of(double x, double y) const;
    Eigen::Vector2d cell_center(int i, int j) const;
    bool same_layout(const BevGrid& other) const;
};

void validate(const BevGrid& grid);

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double d = 0.0;  // camera-frame depth
    bool in_front() const { return d > 0.0; }
    bool in_image(const Camera& cam) const {
        return in_front() && u >= 0.0 && u < cam.width_px && v >= 0.0 && v < cam.height_px;
    }
};

Projection project(const Eigen::Vector3d& world, const Camera& cam);
std::vector<Projection> project(std::span<const Eigen::Vector3d> points, const Camera& cam);

/// Inverse of project(); throws std::invalid_argument for d <= 0.
Eigen::Vector3d unproject(double u, double v, double d, const Camera& cam);

struct DepthDistribution {
    std::vector<double> weights;
    bool out_of_range = false;
};

/// Two-bin linear interpolation between adjacent bin centers. Depths
/// outside [first center, last center] give an all-zero vector flagged
/// out_of_range.
DepthDistribution depth_to_bin_distribution(double d, const FrustumSpec& spec);

/// Feature column/row hit by a pixel coordinate (floor, half-open).
inline int feature_index(double pixel, int downsample) {
    return static_cast<int>(std::floor(pixel / downsample));
}

/// Continuous feature-map coordinate of a pixel position, such that
/// feature cell k is centred at pixel (k + 0.5) * downsample.
inline double feature_coord(double pixel, int downsample) { return pixel / downsample - 0.5; }

struct RayEntry {
    int camera = 0;
    int z_index = 0;
    double u = 0.0;
    double v = 0.0;
    double d = 0.0;
    DepthDistribution d_q;
};

/// Per BEV cell (flat index), the cameras that see the cell center at each
/// reference height, ordered by camera then height.
using CellRays = std::vector<std::vector<RayEntry>>;

CellRays bev_cell_rays(const BevGrid& grid, const CameraRig& rig, const FrustumSpec& spec);

}  // namespace hydra::geo
