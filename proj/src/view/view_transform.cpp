#include "hydra/view/view_transform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <random>
#include <sstream>

namespace hydra::view {

using ad::ShapeError;

std::vector<Eigen::Vector3d> frustum_points(const geo::CameraRig& rig, const geo::FrustumSpec& spec) {
    geo::validate(spec);
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(rig.cameras.size() * spec.feat_h * spec.feat_w * spec.depth_bins);
    for (const auto& cam : rig.cameras) {
        for (int h = 0; h < spec.feat_h; ++h) {
            const double v = (h + 0.5) * spec.downsample;
            for (int w = 0; w < spec.feat_w; ++w) {
                const double u = (w + 0.5) * spec.downsample;
                for (int d = 0; d < spec.depth_bins; ++d) pts.push_back(geo::unproject(u, v, spec.bin_center(d), cam));
            }
        }
    }
    return pts;
}

std::vector<std::int64_t> point_cells(std::span<const Eigen::Vector3d> points, const geo::BevGrid& grid) {
    std::vector<std::int64_t> cells(points.size(), -1);
    for (std::size_t p = 0; p < points.size(); ++p) {
        if (auto c = grid.cell_of(points[p].x(), points[p].y())) cells[p] = grid.flat(c->first, c->second);
    }
    return cells;
}

namespace {

void mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
    }
}

template <typename T>
void mix(std::uint64_t& h, const T& v) {
    mix(h, &v, sizeof(T));
}

std::size_t checked_rows(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected rank 2, got " + ad::to_string(t.shape()));
    return t.dim(0);
}

}  // namespace

std::uint64_t geometry_key(const geo::CameraRig& rig, const geo::FrustumSpec& spec, const geo::BevGrid& grid) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& cam : rig.cameras) {
        mix(h, cam.K.data(), sizeof(double) * 9);
        mix(h, cam.world_to_cam.data(), sizeof(double) * 16);
        mix(h, cam.height_px);
        mix(h, cam.width_px);
    }
    for (int v : {spec.feat_h, spec.feat_w, spec.depth_bins, spec.downsample}) mix(h, v);
    mix(h, spec.d_min);
    mix(h, spec.d_step);
    for (int v : {grid.nx, grid.ny}) mix(h, v);
    mix(h, grid.resolution);
    mix(h, grid.origin_x);
    mix(h, grid.origin_y);
    return h;
}

Tensor outer_product_lift(const Tensor& depth, const Tensor& context) {
    const std::size_t p = checked_rows(depth, "outer_product_lift");
    if (checked_rows(context, "outer_product_lift") != p) {
        throw ShapeError("outer_product_lift: depth " + ad::to_string(depth.shape()) + " vs context " +
                         ad::to_string(context.shape()));
    }
    const std::size_t nd = depth.dim(1), c = context.dim(1);
    const auto dd = depth.data();
    const auto cd = context.data();
    std::vector<double> out(p * nd * c);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t d = 0; d < nd; ++d) {
            const double w = dd[i * nd + d];
            double* row = out.data() + (i * nd + d) * c;
            for (std::size_t k = 0; k < c; ++k) row[k] = w * cd[i * c + k];
        }
    return ad::make_result("outer_product_lift", {p * nd, c}, std::move(out), {depth, context},
                           [depth, context, p, nd, c](std::span<const double> g) {
                               double* gd = ad::grad_buffer(depth);
                               double* gc = ad::grad_buffer(context);
                               const auto dv = depth.data();
                               const auto cv = context.data();
                               for (std::size_t i = 0; i < p; ++i)
                                   for (std::size_t d = 0; d < nd; ++d) {
                                       const double* gr = g.data() + (i * nd + d) * c;
                                       if (gd) {
                                           double acc = 0.0;
                                           for (std::size_t k = 0; k < c; ++k) acc += gr[k] * cv[i * c + k];
                                           gd[i * nd + d] += acc;
                                       }
                                       if (gc) {
                                           const double w = dv[i * nd + d];
                                           for (std::size_t k = 0; k < c; ++k) gc[i * c + k] += w * gr[k];
                                       }
                                   }
                           });
}

Tensor bev_pool_naive(const FrustumFeatureCloud& cloud, const geo::BevGrid& grid) {
    geo::validate(grid);
    const std::size_t p = checked_rows(cloud.features, "bev_pool_naive");
    if (cloud.points.size() != p) {
        throw ShapeError("bev_pool_naive: " + std::to_string(cloud.points.size()) + " points for " +
                         std::to_string(p) + " feature rows");
    }
    const std::size_t c = cloud.features.dim(1);
    const std::size_t nx = grid.nx, ny = grid.ny;
    auto cells = std::make_shared<std::vector<std::int64_t>>(p, -1);
    std::vector<double> out(nx * ny * c, 0.0);
    const auto f = cloud.features.data();
    for (std::size_t i = 0; i < p; ++i) {
        const double fi = std::floor((cloud.points[i].x() - grid.origin_x) / grid.resolution);
        const double fj = std::floor((cloud.points[i].y() - grid.origin_y) / grid.resolution);
        if (fi < 0 || fj < 0 || fi >= static_cast<double>(nx) || fj >= static_cast<double>(ny)) continue;
        const auto cell = static_cast<std::int64_t>(fi) * static_cast<std::int64_t>(ny) + static_cast<std::int64_t>(fj);
        (*cells)[i] = cell;
        for (std::size_t k = 0; k < c; ++k) out[cell * c + k] += f[i * c + k];
    }
    const Tensor src = cloud.features;
    return ad::make_result("bev_pool_naive", {nx, ny, c}, std::move(out), {src}, [src, cells, c](std::span<const double> g) {
        double* gs = ad::grad_buffer(src);
        for (std::size_t i = 0; i < cells->size(); ++i) {
            const auto cell = (*cells)[i];
            if (cell < 0) continue;
            for (std::size_t k = 0; k < c; ++k) gs[i * c + k] += g[cell * c + k];
        }
    });
}

PoolingIndex build_pooling_index(std::span<const std::int64_t> cells, std::size_t nx, std::size_t ny,
                                 std::uint64_t key) {
    const std::size_t n_cells = nx * ny;
    PoolingIndex idx;
    idx.num_points = cells.size();
    idx.nx = nx;
    idx.ny = ny;
    idx.geometry_key = key;

    // counting sort keeps ascending flat order inside each cell
    std::vector<std::size_t> count(n_cells + 1, 0);
    for (auto cell : cells) {
        if (cell < 0) continue;
        if (static_cast<std::size_t>(cell) >= n_cells) throw ShapeError("build_pooling_index: cell id out of range");
        ++count[cell + 1];
    }
    for (std::size_t k = 0; k < n_cells; ++k) count[k + 1] += count[k];
    idx.order.resize(count[n_cells]);
    std::vector<std::size_t> cursor(count.begin(), count.end() - 1);
    for (std::size_t p = 0; p < cells.size(); ++p) {
        if (cells[p] < 0) continue;
        idx.order[cursor[cells[p]]++] = static_cast<std::int64_t>(p);
    }
    for (std::size_t k = 0; k < n_cells; ++k) {
        if (count[k + 1] == count[k]) continue;
        idx.interval_cell.push_back(static_cast<std::int64_t>(k));
        idx.interval_start.push_back(count[k]);
    }
    idx.interval_start.push_back(idx.order.size());
    return idx;
}

PoolingIndex build_pooling_index(const geo::CameraRig& rig, const geo::FrustumSpec& spec, const geo::BevGrid& grid) {
    geo::validate(grid);
    const auto pts = frustum_points(rig, spec);
    const auto cells = point_cells(pts, grid);
    return build_pooling_index(cells, grid.nx, grid.ny, geometry_key(rig, spec, grid));
}

namespace {

// out[cell] = sum over the interval of row(order[r]); rows visited in index
// order. Only touched cells can be non-finite, so those are checked while hot.
template <typename RowFn>
std::vector<double> pool_intervals(const PoolingIndex& idx, std::size_t c, Exec exec, const char* op,
                                   RowFn&& row_into) {
    std::vector<double> out(idx.cells() * c, 0.0);
    const auto n = static_cast<std::int64_t>(idx.intervals());
    auto reduce = [&](std::int64_t k) {
        double* dst = out.data() + idx.interval_cell[k] * c;
        for (std::size_t r = idx.interval_start[k]; r < idx.interval_start[k + 1]; ++r) row_into(idx.order[r], dst);
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t k = 0; k < n; ++k) reduce(k);
        for (auto cell : idx.interval_cell) ad::check_finite(std::span<const double>(out.data() + cell * c, c), op);
    } else {
        for (std::int64_t k = 0; k < n; ++k) {
            reduce(k);
            ad::check_finite(std::span<const double>(out.data() + idx.interval_cell[k] * c, c), op);
        }
    }
    return out;
}

bool records(std::initializer_list<Tensor> inputs) {
    if (!ad::Tape::current().enabled()) return false;
    for (const auto& t : inputs) {
        if (t.defined() && t.requires_grad()) return true;
    }
    return false;
}

}  // namespace

Tensor bev_pool_fast(const FrustumFeatureCloud& cloud, const PoolingIndex& index, Exec exec) {
    const std::size_t p = checked_rows(cloud.features, "bev_pool_fast");
    if (cloud.geometry_key != index.geometry_key || p != index.num_points) {
        throw StaleIndexError("bev_pool_fast: index was built for a different geometry (" +
                              std::to_string(index.num_points) + " points) than the cloud (" + std::to_string(p) +
                              " points)");
    }
    const std::size_t c = cloud.features.dim(1);
    const double* f = cloud.features.data().data();
    auto out = pool_intervals(index, c, exec, "bev_pool_fast", [f, c](std::int64_t row, double* dst) {
        const double* src = f + row * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
    });
    const Tensor src = cloud.features;
    if (!records({src})) {
        return ad::make_result_prechecked("bev_pool_fast", {index.nx, index.ny, c}, std::move(out), {src},
                                          [](std::span<const double>) {});
    }
    auto order = std::make_shared<std::vector<std::int64_t>>(index.order);
    auto starts = std::make_shared<std::vector<std::size_t>>(index.interval_start);
    auto icell = std::make_shared<std::vector<std::int64_t>>(index.interval_cell);
    return ad::make_result_prechecked("bev_pool_fast", {index.nx, index.ny, c}, std::move(out), {src},
                           [src, order, starts, icell, c](std::span<const double> g) {
                               double* gs = ad::grad_buffer(src);
                               for (std::size_t k = 0; k < icell->size(); ++k) {
                                   const double* gk = g.data() + (*icell)[k] * c;
                                   for (std::size_t r = (*starts)[k]; r < (*starts)[k + 1]; ++r) {
                                       double* dst = gs + (*order)[r] * c;
                                       for (std::size_t j = 0; j < c; ++j) dst[j] += gk[j];
                                   }
                               }
                           });
}

Tensor bev_pool_lazy(const Tensor& depth, const Tensor& context, const PoolingIndex& index, Exec exec) {
    const std::size_t pix = checked_rows(depth, "bev_pool_lazy");
    if (checked_rows(context, "bev_pool_lazy") != pix) {
        throw ShapeError("bev_pool_lazy: depth " + ad::to_string(depth.shape()) + " vs context " +
                         ad::to_string(context.shape()));
    }
    const std::size_t nd = depth.dim(1), c = context.dim(1);
    if (pix * nd != index.num_points) {
        throw StaleIndexError("bev_pool_lazy: index covers " + std::to_string(index.num_points) +
                              " frustum points, inputs give " + std::to_string(pix * nd));
    }
    const double* dd = depth.data().data();
    const double* cd = context.data().data();
    auto out = pool_intervals(index, c, exec, "bev_pool_lazy", [dd, cd, nd, c](std::int64_t q, double* dst) {
        const double w = dd[q];
        const double* src = cd + (q / static_cast<std::int64_t>(nd)) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += w * src[k];
    });
    if (!records({depth, context})) {
        return ad::make_result_prechecked("bev_pool_lazy", {index.nx, index.ny, c}, std::move(out), {depth, context},
                                          [](std::span<const double>) {});
    }
    auto order = std::make_shared<std::vector<std::int64_t>>(index.order);
    auto starts = std::make_shared<std::vector<std::size_t>>(index.interval_start);
    auto icell = std::make_shared<std::vector<std::int64_t>>(index.interval_cell);
    return ad::make_result_prechecked(
        "bev_pool_lazy", {index.nx, index.ny, c}, std::move(out), {depth, context},
        [depth, context, order, starts, icell, nd, c](std::span<const double> g) {
            double* gd = ad::grad_buffer(depth);
            double* gc = ad::grad_buffer(context);
            const double* dv = depth.data().data();
            const double* cv = context.data().data();
            for (std::size_t k = 0; k < icell->size(); ++k) {
                const double* gk = g.data() + (*icell)[k] * c;
                for (std::size_t r = (*starts)[k]; r < (*starts)[k + 1]; ++r) {
                    const std::int64_t q = (*order)[r];
                    const std::int64_t px = q / static_cast<std::int64_t>(nd);
                    if (gd) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) acc += gk[j] * cv[px * c + j];
                        gd[q] += acc;
                    }
                    if (gc) {
                        const double w = dv[q];
                        for (std::size_t j = 0; j < c; ++j) gc[px * c + j] += w * gk[j];
                    }
                }
            }
        });
}

Tensor warp_bev_history(const Tensor& previous, const Se2& current_in_previous, const geo::BevGrid& grid) {
    geo::validate(grid);
    if (previous.rank() != 3 || previous.dim(0) != static_cast<std::size_t>(grid.nx) ||
        previous.dim(1) != static_cast<std::size_t>(grid.ny)) {
        throw ShapeError("warp_bev_history: map " + ad::to_string(previous.shape()) + " does not match the " +
                         std::to_string(grid.nx) + "x" + std::to_string(grid.ny) + " grid");
    }
    const double cs = std::cos(current_in_previous.yaw), sn = std::sin(current_in_previous.yaw);
    std::vector<double> coords;
    coords.reserve(static_cast<std::size_t>(grid.cells()) * 2);
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j) {
            const auto p = grid.cell_center(i, j);
            const double px = cs * p.x() - sn * p.y() + current_in_previous.x;
            const double py = sn * p.x() + cs * p.y() + current_in_previous.y;
            coords.push_back((px - grid.origin_x) / grid.resolution - 0.5);
            coords.push_back((py - grid.origin_y) / grid.resolution - 0.5);
        }
    const auto n = static_cast<std::size_t>(grid.cells());
    auto sampled = ad::bilinear_sample(previous, Tensor::from({n, 2}, std::move(coords)));
    return ad::reshape(sampled, previous.shape());
}

std::vector<PoolBenchRow> run_pool_benchmark(std::size_t pixels, std::size_t depth_bins, std::size_t channels,
                                             std::size_t grid_n, std::size_t repeats, std::uint64_t seed) {
    ad::NoGradGuard no_grad;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    geo::BevGrid grid;
    grid.nx = grid.ny = static_cast<int>(grid_n);
    grid.resolution = 0.8;
    grid.origin_x = 0.0;
    grid.origin_y = -0.4 * static_cast<double>(grid_n);
    const double extent = grid.resolution * static_cast<double>(grid_n);

    const std::size_t points = pixels * depth_bins;
    std::vector<double> dv(points), cv(pixels * channels);
    for (auto& v : dv) v = unit(rng);
    for (auto& v : cv) v = unit(rng);
    auto depth = Tensor::from({pixels, depth_bins}, dv);
    auto context = Tensor::from({pixels, channels}, cv);
    FrustumFeatureCloud cloud;
    cloud.points.resize(points);
    // a slice of the points lands outside the grid, as real frusta do
    for (auto& p : cloud.points) p = {unit(rng) * extent * 1.1, grid.origin_y + unit(rng) * extent * 1.1, 0.0};
    const auto index = build_pooling_index(point_cells(cloud.points, grid), grid_n, grid_n);

    using clock = std::chrono::steady_clock;
    auto time_ns = [&](auto&& fn) {
        fn();  // warm-up
        double best = 1e300;
        for (std::size_t r = 0; r < repeats; ++r) {
            const auto t0 = clock::now();
            fn();
            const auto t1 = clock::now();
            best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
        return points ? best / static_cast<double>(points) : 0.0;
    };

    std::vector<PoolBenchRow> rows;
    const std::size_t cells = grid_n * grid_n;
    rows.push_back({"naive", points, cells, time_ns([&] {
                        cloud.features = outer_product_lift(depth, context);
                        return bev_pool_naive(cloud, grid);
                    })});
    rows.push_back({"fast_serial", points, cells,
                    time_ns([&] { return bev_pool_lazy(depth, context, index, Exec::serial); })});
    rows.push_back({"fast_parallel", points, cells,
                    time_ns([&] { return bev_pool_lazy(depth, context, index, Exec::parallel); })});
    return rows;
}

std::string pool_bench_csv(const std::vector<PoolBenchRow>& rows) {
    std::ostringstream os;
    os << "kernel,points,cells,ns_per_point\n";
    os.precision(6);
    for (const auto& r : rows) os << r.kernel << ',' << r.points << ',' << r.cells << ',' << r.ns_per_point << '\n';
    return os.str();
}

}  // namespace hydra::view
