#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/tensor/tensor.hpp"

namespace hydra::view {

using ad::Tensor;

class StaleIndexError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Exec { serial, parallel };

/// Frustum points in (camera, row, col, depth bin) order: flat index
/// ((n*H + h)*W + w)*D + d. Each point sits at its feature cell's pixel
/// centre and bin-centre depth.
std::vector<Eigen::Vector3d> frustum_points(const geo::CameraRig& rig, const geo::FrustumSpec& spec);

/// Flat BEV cell per point, -1 outside the grid.
std::vector<std::int64_t> point_cells(std::span<const Eigen::Vector3d> points, const geo::BevGrid& grid);

/// Identifies a (rig, spec, grid) triple; indices built for one triple
/// refuse clouds from another.
std::uint64_t geometry_key(const geo::CameraRig& rig, const geo::FrustumSpec& spec, const geo::BevGrid& grid);

struct FrustumFeatureCloud {
    Tensor features;                      // [P, C]
    std::vector<Eigen::Vector3d> points;  // world coords, P entries
    std::uint64_t geometry_key = 0;
};

/// depth [P, D] x context [P, C] -> [P*D, C]; row p*D + d is depth[p, d] * context[p, :].
Tensor outer_product_lift(const Tensor& depth, const Tensor& context);

/// Oracle: visits points in flat order, locates each cell from its world
/// coordinates and accumulates. Returns [nx, ny, C].
Tensor bev_pool_naive(const FrustumFeatureCloud& cloud, const geo::BevGrid& grid);

/// Points grouped by cell. `order` holds frustum flat indices sorted by
/// (cell, flat index); interval k covers order[start[k], start[k+1]) and
/// lands in cell interval_cell[k]. Out-of-grid points are absent.
struct PoolingIndex {
    std::size_t num_points = 0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<std::int64_t> order;
    std::vector<std::size_t> interval_start;  // intervals + 1 entries
    std::vector<std::int64_t> interval_cell;  // strictly increasing
    std::uint64_t geometry_key = 0;

    std::size_t intervals() const { return interval_cell.size(); }
    std::size_t cells() const { return nx * ny; }
};

PoolingIndex build_pooling_index(std::span<const std::int64_t> cells, std::size_t nx, std::size_t ny,
                                 std::uint64_t key = 0);
PoolingIndex build_pooling_index(const geo::CameraRig& rig, const geo::FrustumSpec& spec, const geo::BevGrid& grid);

/// Interval reduction over a materialized cloud; bitwise equal to
/// bev_pool_naive. Throws StaleIndexError when the cloud's geometry key or
/// size disagrees with the index.
Tensor bev_pool_fast(const FrustumFeatureCloud& cloud, const PoolingIndex& index, Exec exec = Exec::parallel);

/// Fused lift + splat without materializing the [P*D, C] cloud. Same
/// accumulation order as bev_pool_fast on outer_product_lift(depth, context),
/// hence bitwise equal to it. Differentiable in depth and context.
Tensor bev_pool_lazy(const Tensor& depth, const Tensor& context, const PoolingIndex& index,
                     Exec exec = Exec::parallel);

struct Se2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
};

/// `current_in_previous` is the current ego pose expressed in the previous
/// ego frame. Each current cell centre is mapped into the previous frame
/// and the previous map is bilinearly sampled there (zero outside).
Tensor warp_bev_history(const Tensor& previous, const Se2& current_in_previous, const geo::BevGrid& grid);

struct PoolBenchRow {
    std::string kernel;
    std::size_t points = 0;
    std::size_t cells = 0;
    double ns_per_point = 0.0;
};

/// Times naive (lift then pool) against the fused index kernels on random
/// clouds of `pixels * depth_bins` points.
std::vector<PoolBenchRow> run_pool_benchmark(std::size_t pixels, std::size_t depth_bins, std::size_t channels,
                                             std::size_t grid_n, std::size_t repeats, std::uint64_t seed);
std::string pool_bench_csv(const std::vector<PoolBenchRow>& rows);

}  // namespace hydra::view
