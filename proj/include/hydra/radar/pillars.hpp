#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/tensor/tensor.hpp"

namespace hydra::radar {

struct RadarPoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double rcs = 0.0;  // dB
    double vx = 0.0;   // ego-motion compensated, m/s
    double vy = 0.0;
};

struct RadarPointCloud {
    std::vector<RadarPoint> points;
};

/// Number of raw per-point inputs: (rcs, vx, vy, dx, dy).
inline constexpr std::size_t kPointFeatures = 5;

/// Shared per-point layer: relu(x * weight + bias), weight [5, C_r].
struct PillarEncoder {
    ad::Tensor weight;
    ad::Tensor bias;
    std::size_t channels() const { return weight.dim(1); }
};

struct PillarGrid {
    ad::Tensor features;                 // [nx, ny, C_r]; zero where unoccupied
    std::vector<std::uint8_t> occupancy;  // [nx * ny]
    std::size_t dropped = 0;             // points outside the grid
};

PillarGrid voxelize_pillars(const RadarPointCloud& cloud, const geo::BevGrid& grid,
                            const PillarEncoder& encoder);

/// Radar features in one camera frustum's (depth bin x feature column) plane.
struct FrustumRadar {
    ad::Tensor features;                 // [D, W, C]
    std::vector<std::uint8_t> occupancy;  // [D * W]
};

/// Flat (depth bin * W + column) slot for every pillar of the grid in one
/// camera, or -1 when the pillar is empty or outside that frustum.
std::vector<std::int64_t> frustum_slots(const PillarGrid& pillars, const geo::BevGrid& grid,
                                        const geo::Camera& cam, const geo::FrustumSpec& spec);

/// Projects occupied pillar centres (z = 0) into each camera: column by
/// floor(u / downsample), depth bin by nearest center. Collisions keep the
/// elementwise max; the pooled C_r features go through `projection`
/// [C_r, C] without bias so empty slots stay zero.
std::vector<FrustumRadar> rasterize_to_frustum(const PillarGrid& pillars, const geo::BevGrid& grid,
                                               const geo::CameraRig& rig, const geo::FrustumSpec& spec,
                                               const ad::Tensor& projection);

/// CSV with header `x,y,z,rcs,vx,vy`.
RadarPointCloud read_radar_csv(std::istream& is);
void write_radar_csv(std::ostream& os, const RadarPointCloud& cloud);
RadarPointCloud load_radar_csv(const std::filesystem::path& path);

}  // namespace hydra::radar
