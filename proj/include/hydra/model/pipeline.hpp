#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "hydra/fusion/fusion.hpp"
#include "hydra/hat/hat.hpp"
#include "hydra/heads/heads.hpp"
#include "hydra/model/config.hpp"
#include "hydra/radar/pillars.hpp"
#include "hydra/sim/scene.hpp"
#include "hydra/tensor/params.hpp"
#include "hydra/view/view_transform.hpp"

namespace hydra::model {

using ad::Tensor;

/// Everything one frame contributes: network inputs and training targets.
struct FrameData {
    std::vector<double> images;           // [N, H/pool, W/pool, kImageChannels]
    radar::RadarPointCloud radar;
    std::vector<double> depth_target;     // [N*fh*fw, D] bin distributions
    std::vector<std::uint8_t> depth_valid;  // [N*fh*fw], GT depth inside the bin range
    std::vector<double> depth_gt;         // [N*fh*fw] metres
    std::vector<int> occupancy;           // OccGrid layout
    heads::CenterTargets center;
    std::vector<Box> boxes;               // ego frame, in-grid only
    sim::Pose2 ego;
};

FrameData prepare_frame(const sim::Scene& scene, int frame, const RunConfig& config);

/// Per-scene cached frames, in order.
struct SceneData {
    std::vector<FrameData> frames;
    geo::CameraRig rig;
};
SceneData prepare_scene(const sim::Scene& scene, const RunConfig& config);

/// Geometry that depends only on (rig, spec, grid): cached by geometry key.
struct GeometryCache {
    view::PoolingIndex pool;
    fusion::RayTable rays;
};

struct Outputs {
    Tensor image_features;  // F, [N, fh, fw, C]
    Tensor fused_features;  // F' (== F without HAT)
    Tensor depth_logits;    // [N, fh, fw, D]
    Tensor depth;           // d_P
    Tensor cam_bev;         // [nx, ny, C]
    Tensor radar_bev;       // [nx, ny, C_r], undefined without radar
    Tensor guidance;        // r, [nx, ny, 1], undefined without RDC
    Tensor w_c;             // [rays], undefined without RDC
    Tensor bev;             // final BEV fed to the heads
    Tensor occ_logits;      // [nx, ny, nz, classes]
    heads::CenterOutput center;
};

struct LossTerms {
    Tensor total;
    double depth = 0.0, occ = 0.0, heat = 0.0, box = 0.0;
};

class Model {
  public:
    explicit Model(const RunConfig& config);

    const RunConfig& config() const { return config_; }
    ad::ParamStore& params() { return store_; }
    const ad::ParamStore& params() const { return store_; }

    /// Runs the full pipeline on frame `index` of `scene`; the previous frame
    /// feeds the history branch (zeros for the first frame).
    Outputs forward(const SceneData& scene, std::size_t index);
    LossTerms loss(const Outputs& out, const FrameData& frame) const;
    std::vector<Detection> detect(const Outputs& out) const;
    const GeometryCache& geometry(const geo::CameraRig& rig);

  private:
    struct CameraBranch {
        Tensor features, fused, depth_logits, depth, bev;
    };
    CameraBranch camera_branch(const FrameData& frame, const radar::PillarGrid* pillars, const geo::CameraRig& rig,
                               const GeometryCache& geo);
    radar::PillarGrid pillars(const FrameData& frame) const;

    RunConfig config_;
    geo::FrustumSpec spec_;
    geo::BevGrid grid_;
    ad::ParamStore store_;

    Tensor patch_w_, patch_b_, conv_w_, conv_b_;
    radar::PillarEncoder pillar_;
    Tensor radar_pv_;
    hat::HatConfig hat_cfg_;
    hat::HatWeights hat_;
    hat::DepthContextWeights pv_;
    fusion::SeFusionWeights fuse_;
    fusion::RgnWeights rgn_;
    fusion::RdcConfig rdc_cfg_;
    fusion::RdcWeights rdc_;
    heads::OccupancyWeights occ_;
    heads::CenterWeights center_;
    std::vector<double> occ_class_weights_;

    std::map<std::uint64_t, std::unique_ptr<GeometryCache>> geometry_;
};

}  // namespace hydra::model
