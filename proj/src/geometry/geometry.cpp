#include "hydra/geometry/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace hydra::geo {

Eigen::Matrix4d Camera::cam_to_world() const {
    Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d r = world_to_cam.topLeftCorner<3, 3>();
    inv.topLeftCorner<3, 3>() = r.transpose();
    inv.topRightCorner<3, 1>() = -r.transpose() * world_to_cam.topRightCorner<3, 1>();
    return inv;
}

Eigen::Vector3d Camera::center_world() const { return cam_to_world().topRightCorner<3, 1>(); }

void validate(const Camera& cam) {
    const auto& k = cam.K;
    if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0) {
        throw std::invalid_argument("camera: K must be upper-triangular");
    }
    if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
        throw std::invalid_argument("camera: focal lengths must be positive");
    }
    if (std::fabs(k(2, 2) - 1.0) > 1e-12) throw std::invalid_argument("camera: K(2,2) must be 1");
    const Eigen::Matrix3d r = cam.world_to_cam.topLeftCorner<3, 3>();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        r.determinant() < 0.0) {
        throw std::invalid_argument("camera: extrinsic rotation is not proper orthonormal");
    }
    const Eigen::RowVector4d last = cam.world_to_cam.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 0.0) {
        throw std::invalid_argument("camera: extrinsic last row must be [0 0 0 1]");
    }
    if (cam.height_px <= 0 || cam.width_px <= 0) throw std::invalid_argument("camera: empty image");
}

Camera make_mounted_camera(double fx, double fy, double cx, double cy, int width_px, int height_px,
                           double yaw, double height, double x, double y) {
    Camera cam;
    cam.K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    cam.width_px = width_px;
    cam.height_px = height_px;
    // Camera axes expressed in ego coordinates for a camera yawed by `yaw`.
    const Eigen::Vector3d fwd(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = fwd.transpose();
    const Eigen::Vector3d center(x, y, height);
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r;
    cam.world_to_cam.topRightCorner<3, 1>() = -r * center;
    return cam;
}

void validate(const FrustumSpec& spec) {
    if (spec.depth_bins < 2) throw std::invalid_argument("frustum: need at least 2 depth bins");
    if (!(spec.d_min > 0.0)) throw std::invalid_argument("frustum: d_min must be positive");
    if (!(spec.d_step > 0.0)) throw std::invalid_argument("frustum: d_step must be positive");
    if (spec.feat_h <= 0 || spec.feat_w <= 0 || spec.downsample <= 0) {
        throw std::invalid_argument("frustum: feature dims must be positive");
    }
}

std::optional<std::pair<int, int>> BevGrid::cell_of(double x, double y) const {
    const double fi = std::floor((x - origin_x) / resolution);
    const double fj = std::floor((y - origin_y) / resolution);
    if (fi < 0 || fj < 0 || fi >= nx || fj >= ny) return std::nullopt;
    return std::make_pair(static_cast<int>(fi), static_cast<int>(fj));
}

Eigen::Vector2d BevGrid::cell_center(int i, int j) const {
    return {origin_x + (i + 0.5) * resolution, origin_y + (j + 0.5) * resolution};
}

bool BevGrid::same_layout(const BevGrid& o) const {
    return nx == o.nx && ny == o.ny && resolution == o.resolution && origin_x == o.origin_x &&
           origin_y == o.origin_y;
}

void validate(const BevGrid& grid) {
    if (!(grid.resolution > 0.0)) throw std::invalid_argument("bev grid: resolution must be positive");
    if (grid.nx <= 0 || grid.ny <= 0) throw std::invalid_argument("bev grid: empty grid");
}

Projection project(const Eigen::Vector3d& world, const Camera& cam) {
    const Eigen::Vector4d hom(world.x(), world.y(), world.z(), 1.0);
    const Eigen::Vector3d pc = (cam.world_to_cam * hom).head<3>();
    const Eigen::Vector3d img = cam.K * pc;
    Projection p;
    p.d = pc.z();
    if (p.d != 0.0) {
        p.u = img.x() / p.d;
        p.v = img.y() / p.d;
    }
    return p;
}

std::vector<Projection> project(std::span<const Eigen::Vector3d> points, const Camera& cam) {
    std::vector<Projection> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(project(p, cam));
    return out;
}

Eigen::Vector3d unproject(double u, double v, double d, const Camera& cam) {
    if (!(d > 0.0)) throw std::invalid_argument("unproject: depth must be positive");
    const Eigen::Vector3d pc = cam.K.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(u * d, v * d, d));
    const Eigen::Vector4d hom(pc.x(), pc.y(), pc.z(), 1.0);
    return (cam.cam_to_world() * hom).head<3>();
}

DepthDistribution depth_to_bin_distribution(double d, const FrustumSpec& spec) {
    DepthDistribution out;
    out.weights.assign(spec.depth_bins, 0.0);
    const double pos = (d - spec.d_min) / spec.d_step;
    if (!(pos >= 0.0) || pos > spec.depth_bins - 1) {
        out.out_of_range = true;
        return out;
    }
    const int lo = std::min(static_cast<int>(std::floor(pos)), spec.depth_bins - 1);
    const double frac = pos - lo;
    out.weights[lo] = 1.0 - frac;
    if (frac > 0.0) out.weights[lo + 1] = frac;
    return out;
}

CellRays bev_cell_rays(const BevGrid& grid, const CameraRig& rig, const FrustumSpec& spec) {
    CellRays rays(grid.cells());
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            const Eigen::Vector2d c = grid.cell_center(i, j);
            auto& list = rays[grid.flat(i, j)];
            for (int cam = 0; cam < static_cast<int>(rig.cameras.size()); ++cam) {
                for (int z = 0; z < static_cast<int>(grid.z_ref_heights.size()); ++z) {
                    const auto p = project({c.x(), c.y(), grid.z_ref_heights[z]}, rig.cameras[cam]);
                    if (!p.in_image(rig.cameras[cam])) continue;
                    list.push_back(RayEntry{cam, z, p.u, p.v, p.d, depth_to_bin_distribution(p.d, spec)});
                }
            }
        }
    }
    return rays;
}

}  // namespace hydra::geo
