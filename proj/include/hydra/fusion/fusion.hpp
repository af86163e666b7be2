#pragma once

#include <span>
#include <string>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/tensor/params.hpp"
#include "hydra/tensor/tensor.hpp"

namespace hydra::fusion {

using ad::Tensor;

// ---------------------------------------------------------------------------
// Concat + squeeze-and-excitation fusion
// ---------------------------------------------------------------------------

struct SeFusionConfig {
    std::size_t cam_channels = 32;
    std::size_t radar_channels = 0;    // 0 = no radar branch
    std::size_t history_channels = 0;  // 0 = no history branch
    std::size_t out_channels = 32;
    std::size_t reduction = 4;
};

/// The 1x1 projection of the channel concat is stored per input group
/// (fuse.cam.w, fuse.radar.w, fuse.hist.w, shared fuse.b), which is the
/// same linear map as one [sum C, C_out] matrix. Excitation: fuse.se.{w1,b1,w2,b2}.
struct SeFusionWeights {
    Tensor w_cam, w_radar, w_hist, bias;
    Tensor se_w1, se_b1, se_w2, se_b2;
};

SeFusionWeights make_se_fusion_weights(const SeFusionConfig& config, ad::ParamStore& store,
                                       const std::string& prefix = "fuse.");

struct SeFusionOutput {
    Tensor features;   // [nx, ny, C_out]
    Tensor projected;  // before gating
    Tensor gates;      // [1, C_out]
};

/// cam [nx,ny,Cc]; radar and history may be undefined when their branch is
/// disabled. Throws ShapeError on grid or channel mismatch.
SeFusionOutput concat_fuse_se(const Tensor& cam, const Tensor& radar, const Tensor& history,
                              const SeFusionWeights& w);

// ---------------------------------------------------------------------------
// Radar guidance network
// ---------------------------------------------------------------------------

struct RgnWeights {
    Tensor w;  // [3, 3, C_r, 1]
    Tensor b;  // [1]
};

/// Parameter names: rgn.w, rgn.b.
RgnWeights make_rgn_weights(std::size_t radar_channels, ad::ParamStore& store, const std::string& prefix = "rgn.");

/// r = sigmoid(conv3x3(pillars)), shape [nx, ny, 1].
Tensor rgn_forward(const Tensor& pillars, const RgnWeights& w);

// ---------------------------------------------------------------------------
// Depth-consistent radar-weighted spatial cross-attention
// ---------------------------------------------------------------------------

/// w_c = sum_k d_P[k] * d_Q[k]. Throws std::invalid_argument on length mismatch.
double consistency_weight(std::span<const double> d_p, std::span<const double> d_q);

/// One (cell, camera, reference height) projection that lands inside the
/// image with an in-range depth.
struct RayTableEntry {
    std::int64_t cell = 0;
    std::int64_t camera = 0;
    std::int64_t z_index = 0;
    std::int64_t pixel = 0;  // flat (camera, feature row, feature col) of the base projection
    double row = 0.0;        // continuous feature-map coordinates of the projection
    double col = 0.0;
};

struct RayTable {
    std::size_t cells = 0;
    std::size_t cameras = 0;
    std::size_t z_refs = 0;
    std::size_t depth_bins = 0;
    std::vector<RayTableEntry> entries;  // ordered by cell, then camera, then height
    std::vector<double> d_q;             // [entries, D]
};

/// Flattens bev_cell_rays output. Rays whose depth lies outside the bin
/// range have d_Q = 0 and hence w_c = 0; they are dropped.
RayTable build_ray_table(const geo::CellRays& rays, const geo::FrustumSpec& spec, std::size_t cameras,
                         std::size_t z_refs);

struct RdcConfig {
    std::size_t bev_channels = 32;
    std::size_t feature_channels = 32;
    std::size_t points = 4;
    std::size_t z_refs = 4;
};

/// Parameter names (prefix "rdc."): offset.{w,b}, attn.{w,b}, value.w, out.w.
/// offset.*, attn.* and out.w start at zero.
struct RdcWeights {
    Tensor offset_w, offset_b;  // [C_bev, z*P*2]
    Tensor attn_w, attn_b;      // [C_bev, z*P]
    Tensor value_w;             // [C_f, C_bev], no bias
    Tensor out_w;               // [C_bev, C_bev], no bias
};

RdcWeights make_rdc_weights(const RdcConfig& config, ad::ParamStore& store, const std::string& prefix = "rdc.");

struct RdcOutput {
    Tensor refined;  // Q + delta * W_out, [nx, ny, C_bev]
    Tensor delta;    // [nx, ny, C_bev]
    Tensor w_c;      // [entries]
};

/// q [nx,ny,C_bev]; features [N, fh, fw, C_f]; d_p [N, fh, fw, D]; r [nx,ny,1].
/// delta(cell) = sum over rays (camera i, height j) of
///   DeformAttn(q, proj_ij + offsets, F_i) * w_c^{ij} * r(cell),
/// with w_c read from d_P at the feature cell containing the base projection.
RdcOutput radar_weighted_sca(const Tensor& q, const Tensor& features, const Tensor& d_p, const Tensor& r,
                             const RayTable& table, const RdcWeights& w, const RdcConfig& config);

}  // namespace hydra::fusion
