#include "hydra/fusion/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace hydra::fusion {

using ad::Init;
using ad::ShapeError;

namespace {

void require_map(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected [nx, ny, C], got " + ad::to_string(t.shape()));
}

Tensor flat_cells(const Tensor& map) { return ad::reshape(map, {map.dim(0) * map.dim(1), map.dim(2)}); }

}  // namespace

SeFusionWeights make_se_fusion_weights(const SeFusionConfig& config, ad::ParamStore& store, const std::string& prefix) {
    if (config.out_channels == 0 || config.cam_channels == 0 || config.reduction == 0) {
        throw std::invalid_argument("se fusion: channel counts and reduction must be positive");
    }
    const double gain = std::sqrt(2.0);
    SeFusionWeights w;
    w.w_cam = store.create(prefix + "cam.w", {config.cam_channels, config.out_channels}, Init::uniform,
                           config.cam_channels, gain);
    if (config.radar_channels > 0) {
        w.w_radar = store.create(prefix + "radar.w", {config.radar_channels, config.out_channels}, Init::uniform,
                                 config.radar_channels, gain);
    }
    if (config.history_channels > 0) {
        w.w_hist = store.create(prefix + "hist.w", {config.history_channels, config.out_channels}, Init::uniform,
                                config.history_channels, gain);
    }
    w.bias = store.create(prefix + "b", {config.out_channels}, Init::zeros);
    const std::size_t hidden = std::max<std::size_t>(1, config.out_channels / config.reduction);
    w.se_w1 = store.create(prefix + "se.w1", {config.out_channels, hidden}, Init::uniform, config.out_channels, gain);
    w.se_b1 = store.create(prefix + "se.b1", {hidden}, Init::zeros);
    w.se_w2 = store.create(prefix + "se.w2", {hidden, config.out_channels}, Init::uniform, hidden);
    w.se_b2 = store.create(prefix + "se.b2", {config.out_channels}, Init::zeros);
    return w;
}

SeFusionOutput concat_fuse_se(const Tensor& cam, const Tensor& radar, const Tensor& history, const SeFusionWeights& w) {
    require_map(cam, "concat_fuse_se");
    const std::size_t nx = cam.dim(0), ny = cam.dim(1), cells = nx * ny;
    auto same_grid = [&](const Tensor& t, const char* name) {
        require_map(t, "concat_fuse_se");
        if (t.dim(0) != nx || t.dim(1) != ny) {
            throw ShapeError(std::string("concat_fuse_se: ") + name + " map " + ad::to_string(t.shape()) +
                             " is on a different grid than camera map " + ad::to_string(cam.shape()));
        }
    };

    auto proj = ad::linear(flat_cells(cam), w.w_cam, w.bias);
    if (radar.defined()) {
        if (!w.w_radar.defined()) throw ShapeError("concat_fuse_se: radar given but fusion has no radar branch");
        same_grid(radar, "radar");
        proj = ad::add(proj, ad::linear(flat_cells(radar), w.w_radar));
    }
    if (history.defined()) {
        if (!w.w_hist.defined()) throw ShapeError("concat_fuse_se: history given but fusion has no history branch");
        same_grid(history, "history");
        proj = ad::add(proj, ad::linear(flat_cells(history), w.w_hist));
    }
    const std::size_t c = proj.dim(1);

    auto squeeze = ad::reshape(ad::mean(proj, 0), {1, c});
    auto gates = ad::sigmoid(ad::linear(ad::relu(ad::linear(squeeze, w.se_w1, w.se_b1)), w.se_w2, w.se_b2));
    std::vector<std::int64_t> zeros(cells, 0);
    auto out = ad::mul(proj, ad::gather_rows(gates, zeros));

    SeFusionOutput r;
    r.features = ad::reshape(out, {nx, ny, c});
    r.projected = ad::reshape(proj, {nx, ny, c});
    r.gates = gates;
    return r;
}

RgnWeights make_rgn_weights(std::size_t radar_channels, ad::ParamStore& store, const std::string& prefix) {
    RgnWeights w;
    w.w = store.create(prefix + "w", {3, 3, radar_channels, 1}, Init::uniform, 9 * radar_channels);
    w.b = store.create(prefix + "b", {1}, Init::zeros);
    return w;
}

Tensor rgn_forward(const Tensor& pillars, const RgnWeights& w) {
    require_map(pillars, "rgn_forward");
    return ad::sigmoid(ad::conv2d(pillars, w.w, w.b));
}

double consistency_weight(std::span<const double> d_p, std::span<const double> d_q) {
    if (d_p.size() != d_q.size()) {
        throw std::invalid_argument("consistency_weight: d_P has " + std::to_string(d_p.size()) + " bins, d_Q has " +
                                    std::to_string(d_q.size()));
    }
    double s = 0.0;
    for (std::size_t k = 0; k < d_p.size(); ++k) s += d_p[k] * d_q[k];
    return s;
}

RayTable build_ray_table(const geo::CellRays& rays, const geo::FrustumSpec& spec, std::size_t cameras,
                         std::size_t z_refs) {
    geo::validate(spec);
    RayTable t;
    t.cells = rays.size();
    t.cameras = cameras;
    t.z_refs = z_refs;
    t.depth_bins = static_cast<std::size_t>(spec.depth_bins);
    for (std::size_t cell = 0; cell < rays.size(); ++cell) {
        for (const auto& ray : rays[cell]) {
            if (ray.d_q.out_of_range) continue;
            const int fr = geo::feature_index(ray.v, spec.downsample);
            const int fc = geo::feature_index(ray.u, spec.downsample);
            if (ray.camera < 0 || static_cast<std::size_t>(ray.camera) >= cameras || ray.z_index < 0 ||
                static_cast<std::size_t>(ray.z_index) >= z_refs || fr < 0 || fr >= spec.feat_h || fc < 0 ||
                fc >= spec.feat_w) {
                throw ShapeError("build_ray_table: ray (camera " + std::to_string(ray.camera) + ", pixel " +
                                 std::to_string(ray.u) + "," + std::to_string(ray.v) +
                                 ") does not fit the frustum spec");
            }
            RayTableEntry e;
            e.cell = static_cast<std::int64_t>(cell);
            e.camera = ray.camera;
            e.z_index = ray.z_index;
            e.pixel = (static_cast<std::int64_t>(ray.camera) * spec.feat_h + fr) * spec.feat_w + fc;
            e.row = geo::feature_coord(ray.v, spec.downsample);
            e.col = geo::feature_coord(ray.u, spec.downsample);
            t.entries.push_back(e);
            t.d_q.insert(t.d_q.end(), ray.d_q.weights.begin(), ray.d_q.weights.end());
        }
    }
    return t;
}

RdcWeights make_rdc_weights(const RdcConfig& config, ad::ParamStore& store, const std::string& prefix) {
    const std::size_t c = config.bev_channels, zp = config.z_refs * config.points;
    RdcWeights w;
    w.offset_w = store.create(prefix + "offset.w", {c, zp * 2}, Init::zeros);
    w.offset_b = store.create(prefix + "offset.b", {zp * 2}, Init::zeros);
    w.attn_w = store.create(prefix + "attn.w", {c, zp}, Init::zeros);
    w.attn_b = store.create(prefix + "attn.b", {zp}, Init::zeros);
    w.value_w = store.create(prefix + "value.w", {config.feature_channels, c}, Init::uniform, config.feature_channels);
    w.out_w = store.create(prefix + "out.w", {c, c}, Init::zeros);
    return w;
}

RdcOutput radar_weighted_sca(const Tensor& q, const Tensor& features, const Tensor& d_p, const Tensor& r,
                             const RayTable& table, const RdcWeights& w, const RdcConfig& config) {
    require_map(q, "radar_weighted_sca");
    require_map(r, "radar_weighted_sca");
    if (features.rank() != 4 || d_p.rank() != 4) {
        throw ShapeError("radar_weighted_sca: features and d_P must be [N, fh, fw, *], got " +
                         ad::to_string(features.shape()) + " and " + ad::to_string(d_p.shape()));
    }
    const std::size_t nx = q.dim(0), ny = q.dim(1), cb = q.dim(2), cells = nx * ny;
    const std::size_t n_cam = features.dim(0), fh = features.dim(1), fw = features.dim(2), cf = features.dim(3);
    const std::size_t nd = d_p.dim(3), np = config.points, nz = config.z_refs;
    if (r.dim(0) != nx || r.dim(1) != ny || r.dim(2) != 1 || table.cells != cells || d_p.dim(0) != n_cam ||
        d_p.dim(1) != fh || d_p.dim(2) != fw || table.depth_bins != nd || table.cameras != n_cam ||
        table.z_refs != nz || cb != config.bev_channels || cf != config.feature_channels) {
        throw ShapeError("radar_weighted_sca: inconsistent inputs q " + ad::to_string(q.shape()) + ", features " +
                         ad::to_string(features.shape()) + ", d_P " + ad::to_string(d_p.shape()) + ", r " +
                         ad::to_string(r.shape()) + " for a table of " + std::to_string(table.cells) + " cells");
    }

    RdcOutput out;
    const std::size_t ne = table.entries.size();
    if (ne == 0) {
        out.delta = Tensor::zeros({nx, ny, cb});
        out.w_c = Tensor::zeros({0});
        out.refined = ad::add(q, ad::reshape(ad::linear(flat_cells(out.delta), w.out_w), {nx, ny, cb}));
        return out;
    }

    std::vector<std::int64_t> entry_cell(ne), entry_cz(ne), entry_pixel(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        const auto& en = table.entries[e];
        entry_cell[e] = en.cell;
        entry_cz[e] = en.cell * static_cast<std::int64_t>(nz) + en.z_index;
        entry_pixel[e] = en.pixel;
    }

    // per-(cell, height) sampling offsets and point weights
    auto qf = flat_cells(q);
    auto offsets = ad::reshape(ad::linear(qf, w.offset_w, w.offset_b), {cells * nz, np * 2});
    auto logits = ad::reshape(ad::linear(qf, w.attn_w, w.attn_b), {cells * nz, np});
    auto attn = ad::gather_rows(ad::softmax(logits, 1), entry_cz);  // [E, P]
    auto coords = ad::reshape(ad::gather_rows(offsets, entry_cz), {ne * np, 2});
    std::vector<double> base(ne * np * 2);
    for (std::size_t e = 0; e < ne; ++e)
        for (std::size_t m = 0; m < np; ++m) {
            base[(e * np + m) * 2] = table.entries[e].row;
            base[(e * np + m) * 2 + 1] = table.entries[e].col;
        }
    coords = ad::add(coords, Tensor::from({ne * np, 2}, std::move(base)));

    // bilinear sampling per camera, then back to entry order
    std::vector<Tensor> parts;
    std::vector<std::int64_t> position(ne * np);
    std::size_t filled = 0;
    for (std::size_t n = 0; n < n_cam; ++n) {
        std::vector<std::int64_t> rows;
        for (std::size_t e = 0; e < ne; ++e) {
            if (table.entries[e].camera != static_cast<std::int64_t>(n)) continue;
            for (std::size_t m = 0; m < np; ++m) {
                position[e * np + m] = static_cast<std::int64_t>(filled + rows.size());
                rows.push_back(static_cast<std::int64_t>(e * np + m));
            }
        }
        if (rows.empty()) continue;
        filled += rows.size();
        auto cam_feat = ad::reshape(ad::gather_rows(ad::reshape(features, {n_cam, fh * fw * cf}),
                                                    std::vector<std::int64_t>{static_cast<std::int64_t>(n)}),
                                    {fh, fw, cf});
        parts.push_back(ad::bilinear_sample(cam_feat, ad::gather_rows(coords, rows)));
    }
    auto samples = ad::gather_rows(parts.size() == 1 ? parts[0] : ad::concat(parts, 0), position);  // [E*P, Cf]

    auto pooled = ad::matmul(ad::reshape(attn, {ne, 1, np}), ad::reshape(samples, {ne, np, cf}));  // [E,1,Cf]
    auto values = ad::linear(ad::reshape(pooled, {ne, cf}), w.value_w);                           // [E, Cb]

    // gate = w_c * r
    auto dp_rows = ad::gather_rows(ad::reshape(d_p, {n_cam * fh * fw, nd}), entry_pixel);
    auto w_c = ad::sum(ad::mul(dp_rows, Tensor::from({ne, nd}, table.d_q)), 1);  // [E]
    auto r_rows = ad::gather_rows(ad::reshape(r, {cells, 1}), entry_cell);      // [E, 1]
    auto gate = ad::mul(ad::reshape(w_c, {ne, 1}), r_rows);
    auto gated = ad::matmul(ad::reshape(gate, {ne, 1, 1}), ad::reshape(values, {ne, 1, cb}));

    auto delta = ad::scatter_add(ad::reshape(gated, {ne, cb}), entry_cell, cells);
    out.delta = ad::reshape(delta, {nx, ny, cb});
    out.w_c = w_c;
    out.refined = ad::add(q, ad::reshape(ad::linear(delta, w.out_w), {nx, ny, cb}));
    return out;
}

}  // namespace hydra::fusion
