#include "hydra/radar/pillars.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hydra::radar {

PillarGrid voxelize_pillars(const RadarPointCloud& cloud, const geo::BevGrid& grid,
                            const PillarEncoder& encoder) {
    PillarGrid out;
    out.occupancy.assign(grid.cells(), 0);

    std::vector<double> inputs;
    std::vector<std::int64_t> cell_ids;
    for (const auto& p : cloud.points) {
        const auto cell = grid.cell_of(p.x, p.y);
        if (!cell) {
            ++out.dropped;
            continue;
        }
        const auto c = grid.cell_center(cell->first, cell->second);
        inputs.insert(inputs.end(), {p.rcs, p.vx, p.vy, p.x - c.x(), p.y - c.y()});
        const int flat = grid.flat(cell->first, cell->second);
        cell_ids.push_back(flat);
        out.occupancy[flat] = 1;
    }

    const std::size_t n = cell_ids.size();
    auto point_features = ad::Tensor::from({n, kPointFeatures}, std::move(inputs));
    auto encoded = ad::relu(ad::linear(point_features, encoder.weight, encoder.bias));
    auto pooled = ad::max_pool(encoded, cell_ids, grid.cells());
    out.features = ad::reshape(pooled, {static_cast<std::size_t>(grid.nx), static_cast<std::size_t>(grid.ny),
                                        encoder.channels()});
    return out;
}

std::vector<std::int64_t> frustum_slots(const PillarGrid& pillars, const geo::BevGrid& grid,
                                        const geo::Camera& cam, const geo::FrustumSpec& spec) {
    std::vector<std::int64_t> slots(grid.cells(), -1);
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            const int flat = grid.flat(i, j);
            if (!pillars.occupancy[flat]) continue;
            const auto c = grid.cell_center(i, j);
            const auto p = geo::project({c.x(), c.y(), 0.0}, cam);
            if (!p.in_image(cam)) continue;
            const int w = geo::feature_index(p.u, spec.downsample);
            const long k = std::lround((p.d - spec.d_min) / spec.d_step);
            if (w < 0 || w >= spec.feat_w || k < 0 || k >= spec.depth_bins) continue;
            slots[flat] = k * spec.feat_w + w;
        }
    }
    return slots;
}

std::vector<FrustumRadar> rasterize_to_frustum(const PillarGrid& pillars, const geo::BevGrid& grid,
                                               const geo::CameraRig& rig, const geo::FrustumSpec& spec,
                                               const ad::Tensor& projection) {
    const std::size_t c_r = pillars.features.dim(2);
    if (projection.rank() != 2 || projection.dim(0) != c_r) {
        throw ad::ShapeError("rasterize_to_frustum: projection must be [C_r, C]");
    }
    const auto flat = ad::reshape(pillars.features, {static_cast<std::size_t>(grid.cells()), c_r});
    const std::size_t slots_per_cam = static_cast<std::size_t>(spec.depth_bins) * spec.feat_w;

    std::vector<FrustumRadar> out;
    for (const auto& cam : rig.cameras) {
        const auto slots = frustum_slots(pillars, grid, cam, spec);
        FrustumRadar fr;
        fr.occupancy.assign(slots_per_cam, 0);
        for (auto s : slots) {
            if (s >= 0) fr.occupancy[s] = 1;
        }
        auto pooled = ad::max_pool(flat, slots, slots_per_cam);
        fr.features = ad::reshape(ad::linear(pooled, projection),
                                  {static_cast<std::size_t>(spec.depth_bins),
                                   static_cast<std::size_t>(spec.feat_w), projection.dim(1)});
        out.push_back(std::move(fr));
    }
    return out;
}

RadarPointCloud read_radar_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("radar csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y,z,rcs,vx,vy") throw std::invalid_argument("radar csv: bad header '" + line + "'");
    RadarPointCloud cloud;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        double v[6];
        char comma = 0;
        for (int k = 0; k < 6; ++k) {
            if (!(ls >> v[k]) || (k < 5 && !(ls >> comma && comma == ','))) {
                throw std::invalid_argument("radar csv: malformed row " + std::to_string(lineno));
            }
            if (!std::isfinite(v[k])) {
                throw std::invalid_argument("radar csv: non-finite value on row " + std::to_string(lineno));
            }
        }
        cloud.points.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    return cloud;
}

void write_radar_csv(std::ostream& os, const RadarPointCloud& cloud) {
    os << "x,y,z,rcs,vx,vy\n" << std::setprecision(17);
    for (const auto& p : cloud.points) {
        os << p.x << ',' << p.y << ',' << p.z << ',' << p.rcs << ',' << p.vx << ',' << p.vy << '\n';
    }
}

RadarPointCloud load_radar_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_radar_csv(is);
}

}  // namespace hydra::radar
