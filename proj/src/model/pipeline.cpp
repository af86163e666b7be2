#include "hydra/model/pipeline.hpp"

#include <stdexcept>

namespace hydra::model {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

FrameData prepare_frame(const sim::Scene& scene, int frame, const RunConfig& config) {
    const auto spec = config.frustum();
    const auto grid = config.grid();
    if (static_cast<int>(scene.rig.cameras.size()) != config.cameras) {
        throw ConfigError("scene has " + std::to_string(scene.rig.cameras.size()) + " cameras, config expects " +
                          std::to_string(config.cameras));
    }
    if (scene.spec.feat_h != spec.feat_h || scene.spec.feat_w != spec.feat_w ||
        scene.spec.downsample != spec.downsample) {
        throw ConfigError("scene image layout does not match the config");
    }
    const auto truth = sim::frame_truth(scene, frame, config.occ_grid(), config.noise());

    FrameData f;
    f.ego = scene.ego[frame];
    f.radar = truth.radar;
    f.occupancy = truth.occupancy;
    for (const auto& m : truth.depth) {
        const auto img = sim::camera_image(m, config.image_pool);
        f.images.insert(f.images.end(), img.begin(), img.end());
        const auto fd = sim::feature_depth(m, spec);
        for (std::size_t p = 0; p < fd.depth.size(); ++p) {
            f.depth_gt.push_back(fd.depth[p]);
            if (!fd.valid[p]) {
                f.depth_valid.push_back(0);
                f.depth_target.insert(f.depth_target.end(), sz(spec.depth_bins), 0.0);
                continue;
            }
            const auto dist = geo::depth_to_bin_distribution(fd.depth[p], spec);
            f.depth_valid.push_back(dist.out_of_range ? 0 : 1);
            f.depth_target.insert(f.depth_target.end(), dist.weights.begin(), dist.weights.end());
        }
    }
    for (const auto& b : truth.boxes) {
        if (grid.cell_of(b.x, b.y)) f.boxes.push_back(b);
    }
    f.center = heads::center_targets(f.boxes, grid, kObjectClasses);
    return f;
}

SceneData prepare_scene(const sim::Scene& scene, const RunConfig& config) {
    SceneData s;
    s.rig = scene.rig;
    for (int k = 0; k < scene.frames(); ++k) s.frames.push_back(prepare_frame(scene, k, config));
    return s;
}

Model::Model(const RunConfig& config)
    : config_(config), spec_(config.frustum()), grid_(config.grid()), store_(config.seed) {
    config_.validate();
    const std::size_t c = sz(config.channels), cr = sz(config.radar_channels);
    const std::size_t k = sz(config.downsample / config.image_pool);
    const std::size_t patch_in = k * k * sim::kImageChannels;
    using ad::Init;

    patch_w_ = store_.create("enc.patch.w", {patch_in, c}, Init::uniform, patch_in);
    patch_b_ = store_.create("enc.patch.b", {c}, Init::zeros);
    conv_w_ = store_.create("enc.conv.w", {3, 3, c, c}, Init::uniform, 9 * c);
    conv_b_ = store_.create("enc.conv.b", {c}, Init::zeros);

    if (config.needs_radar()) {
        // raw inputs reach ~15 (rcs dB, m/s), hence the small gain
        pillar_.weight = store_.create("radar.pillar.w", {radar::kPointFeatures, cr}, Init::uniform,
                                       radar::kPointFeatures, 0.1);
        pillar_.bias = store_.create("radar.pillar.b", {cr}, Init::zeros);
    }
    if (config.use_hat) {
        radar_pv_ = store_.create("radar.pv.w", {cr, c}, Init::uniform, cr);
        hat_cfg_.embed_dim = c;
        hat_cfg_.num_heads = sz(config.heads);
        hat_cfg_.height_bins = sz(config.feat_h);
        hat_cfg_.depth_bins = sz(config.depth_bins);
        hat_cfg_.downsample = sz(config.downsample);
        hat_ = hat::make_hat_weights(hat_cfg_, store_);
    }
    pv_ = hat::make_depth_context_weights({c, c, sz(config.depth_bins), c}, store_);

    fusion::SeFusionConfig fc;
    fc.cam_channels = c;
    fc.radar_channels = config.use_radar_bev ? cr : 0;
    fc.history_channels = config.use_history ? c : 0;
    fc.out_channels = c;
    fuse_ = fusion::make_se_fusion_weights(fc, store_);

    if (config.use_rdc) {
        rgn_ = fusion::make_rgn_weights(cr, store_);
        rdc_cfg_.bev_channels = c;
        rdc_cfg_.feature_channels = c;
        rdc_cfg_.points = sz(config.rdc_points);
        rdc_cfg_.z_refs = grid_.z_ref_heights.size();
        rdc_ = fusion::make_rdc_weights(rdc_cfg_, store_);
    }

    occ_ = heads::make_occupancy_weights({c, sz(config.nz), sz(config.occ_channels), kOccClasses}, store_);
    center_ = heads::make_center_weights({c, c, kObjectClasses, -2.19}, store_);
    // objects are a few dozen voxels against thousands of ground/free ones
    occ_class_weights_ = {4.0, 4.0, 4.0, 4.0, 1.0, 1.0};
}

const GeometryCache& Model::geometry(const geo::CameraRig& rig) {
    const auto key = view::geometry_key(rig, spec_, grid_);
    auto it = geometry_.find(key);
    if (it == geometry_.end()) {
        auto g = std::make_unique<GeometryCache>();
        g->pool = view::build_pooling_index(rig, spec_, grid_);
        if (config_.use_rdc) {
            g->rays = fusion::build_ray_table(geo::bev_cell_rays(grid_, rig, spec_), spec_, rig.cameras.size(),
                                              grid_.z_ref_heights.size());
        }
        it = geometry_.emplace(key, std::move(g)).first;
    }
    return *it->second;
}

radar::PillarGrid Model::pillars(const FrameData& frame) const {
    return radar::voxelize_pillars(frame.radar, grid_, pillar_);
}

Model::CameraBranch Model::camera_branch(const FrameData& frame, const radar::PillarGrid* pillars,
                                         const geo::CameraRig& rig, const GeometryCache& geo) {
    const std::size_t n = rig.cameras.size();
    const std::size_t c = sz(config_.channels), fh = sz(spec_.feat_h), fw = sz(spec_.feat_w);
    const std::size_t k = sz(config_.downsample / config_.image_pool);
    const std::size_t hp = fh * k, wp = fw * k;
    const std::size_t per_cam = hp * wp * sim::kImageChannels;
    if (frame.images.size() != n * per_cam) throw ad::ShapeError("camera_branch: image buffer size mismatch");

    std::vector<Tensor> per_camera;
    for (std::size_t cam = 0; cam < n; ++cam) {
        std::vector<double> img(frame.images.begin() + cam * per_cam, frame.images.begin() + (cam + 1) * per_cam);
        auto x = Tensor::from({fh, k, fw, k, sim::kImageChannels}, std::move(img));
        x = ad::reshape(ad::permute(x, {0, 2, 1, 3, 4}), {fh * fw, k * k * sim::kImageChannels});
        x = ad::relu(ad::linear(x, patch_w_, patch_b_));
        x = ad::relu(ad::conv2d(ad::reshape(x, {fh, fw, c}), conv_w_, conv_b_));
        per_camera.push_back(ad::reshape(x, {1, fh, fw, c}));
    }
    CameraBranch out;
    out.features = ad::concat(per_camera, 0);
    out.fused = out.features;

    if (config_.use_hat) {
        const auto planes = radar::rasterize_to_frustum(*pillars, grid_, rig, spec_, radar_pv_);
        std::vector<Tensor> radar_parts;
        const std::size_t d = sz(spec_.depth_bins);
        for (const auto& p : planes) radar_parts.push_back(ad::reshape(p.features, {1, d, fw, c}));
        const auto r_cols = hat::radar_column_reshape(ad::reshape(ad::concat(radar_parts, 0), {1, n, d, fw, c}));
        const auto f_cols = hat::column_batch_reshape(ad::reshape(out.features, {1, n, fh, fw, c}));
        const auto h = hat::hat_forward(f_cols, r_cols, hat_, hat_cfg_);
        out.fused = ad::reshape(hat::column_batch_unreshape(h.fused, 1, n, fw), {n, fh, fw, c});
    }

    const auto dc = hat::depth_context_heads(out.fused, pv_);
    out.depth_logits = dc.depth_logits;
    out.depth = dc.depth;
    const std::size_t p = n * fh * fw;
    out.bev = view::bev_pool_lazy(ad::reshape(dc.depth, {p, sz(spec_.depth_bins)}), ad::reshape(dc.context, {p, c}),
                                  geo.pool);
    return out;
}

Outputs Model::forward(const SceneData& scene, std::size_t index) {
    if (index >= scene.frames.size()) throw std::out_of_range("forward: frame index out of range");
    const auto& frame = scene.frames[index];
    const auto& geo = geometry(scene.rig);

    std::optional<radar::PillarGrid> pg;
    if (config_.needs_radar()) pg = pillars(frame);
    auto cb = camera_branch(frame, pg ? &*pg : nullptr, scene.rig, geo);

    Outputs out;
    out.image_features = cb.features;
    out.fused_features = cb.fused;
    out.depth_logits = cb.depth_logits;
    out.depth = cb.depth;
    out.cam_bev = cb.bev;
    if (pg) out.radar_bev = pg->features;

    Tensor history;
    if (config_.use_history) {
        const std::size_t c = sz(config_.channels);
        if (index == 0) {
            history = Tensor::zeros({sz(grid_.nx), sz(grid_.ny), c});
        } else {
            ad::NoGradGuard no_grad;
            const auto& prev = scene.frames[index - 1];
            std::optional<radar::PillarGrid> prev_pg;
            if (config_.use_hat) prev_pg = pillars(prev);
            const auto prev_cb = camera_branch(prev, prev_pg ? &*prev_pg : nullptr, scene.rig, geo);
            const auto rel = sim::relative_pose(prev.ego, frame.ego);
            history = view::warp_bev_history(prev_cb.bev, {rel.x, rel.y, rel.yaw}, grid_);
        }
    }

    const auto fused = fusion::concat_fuse_se(cb.bev, config_.use_radar_bev ? pg->features : Tensor{}, history, fuse_);
    out.bev = fused.features;
    if (config_.use_rdc) {
        out.guidance = fusion::rgn_forward(pg->features, rgn_);
        const auto rdc = fusion::radar_weighted_sca(out.bev, cb.fused, cb.depth, out.guidance, geo.rays, rdc_, rdc_cfg_);
        out.w_c = rdc.w_c;
        out.bev = rdc.refined;
    }

    out.occ_logits = heads::occupancy_head(heads::channel_to_height(out.bev, occ_, sz(config_.nz)), occ_);
    out.center = heads::center_head(out.bev, center_);
    return out;
}

LossTerms Model::loss(const Outputs& out, const FrameData& frame) const {
    LossTerms t;
    const auto occ = heads::occ_ce(out.occ_logits, frame.occupancy, occ_class_weights_);
    const auto heat = heads::focal_loss(out.center.heat_logits, frame.center.heat);
    const auto box = heads::box_l1(out.center.reg, frame.center.reg, frame.center.cells);
    t.occ = occ.item();
    t.heat = heat.item();
    t.box = box.item();
    t.total = ad::add(ad::add(ad::scale(occ, config_.w_occ), ad::scale(heat, config_.w_heat)),
                      ad::scale(box, config_.w_box));
    if (config_.use_depth_supervision) {
        const std::size_t p = out.depth_logits.numel() / sz(spec_.depth_bins);
        const auto depth = heads::depth_ce(ad::reshape(out.depth_logits, {p, sz(spec_.depth_bins)}), frame.depth_target,
                                           frame.depth_valid);
        t.depth = depth.item();
        t.total = ad::add(t.total, ad::scale(depth, config_.w_depth));
    }
    return t;
}

std::vector<Detection> Model::detect(const Outputs& out) const {
    return heads::decode_boxes(out.center.heat, out.center.reg, grid_, config_.score_thresh, sz(config_.max_dets));
}

}  // namespace hydra::model
