#pragma once

#include <span>
#include <string>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/tensor/params.hpp"
#include "hydra/tensor/tensor.hpp"
#include "hydra/types.hpp"

namespace hydra::heads {

using ad::Tensor;

// ---------------------------------------------------------------------------
// Channel-to-height occupancy
// ---------------------------------------------------------------------------

/// [nx, ny, Z*C] -> [nx, ny, Z, C]; channel k goes to (z = k / C, c = k % C).
Tensor unstack_height(const Tensor& bev, std::size_t z);
/// Inverse of unstack_height.
Tensor stack_height(const Tensor& volume);

struct OccupancyConfig {
    std::size_t in_channels = 32;
    std::size_t z = 4;
    std::size_t channels = 16;  // per height level after the 1x1 expansion
    std::size_t classes = kOccClasses;
};

/// Parameter names (prefix "heads.occ."): c2h.{w,b}, cls.{w,b}.
struct OccupancyWeights {
    Tensor c2h_w, c2h_b;  // [C_in, Z*C]
    Tensor cls_w, cls_b;  // [C, classes]
};

OccupancyWeights make_occupancy_weights(const OccupancyConfig& config, ad::ParamStore& store,
                                        const std::string& prefix = "heads.occ.");

/// 1x1 expansion to Z*C channels followed by unstack_height.
Tensor channel_to_height(const Tensor& bev, const OccupancyWeights& w, std::size_t z);
/// Per-voxel linear classifier: [nx, ny, Z, C] -> logits [nx, ny, Z, classes].
Tensor occupancy_head(const Tensor& volume, const OccupancyWeights& w);
/// Argmax over the last axis; ties go to the lowest class id.
std::vector<int> occupancy_argmax(const Tensor& logits);

// ---------------------------------------------------------------------------
// Centre head
// ---------------------------------------------------------------------------

/// Regression channel layout.
enum RegChannel : std::size_t {
    kRegDx = 0,  // centre offset from the cell centre, in cells
    kRegDy,
    kRegZ,
    kRegLogL,
    kRegLogW,
    kRegLogH,
    kRegSin,
    kRegCos,
    kRegVx,
    kRegVy,
    kRegChannels
};

struct CenterConfig {
    std::size_t in_channels = 32;
    std::size_t hidden = 32;
    std::size_t classes = kObjectClasses;
    double heat_bias = -2.19;  // sigmoid(-2.19) ~ 0.1
};

/// Parameter names (prefix "heads.center."): shared.{w,b} (3x3), heat.{w,b}, reg.{w,b}.
struct CenterWeights {
    Tensor shared_w, shared_b;
    Tensor heat_w, heat_b;
    Tensor reg_w, reg_b;
};

CenterWeights make_center_weights(const CenterConfig& config, ad::ParamStore& store,
                                  const std::string& prefix = "heads.center.");

struct CenterOutput {
    Tensor heat_logits;  // [nx, ny, K]
    Tensor heat;         // sigmoid(heat_logits)
    Tensor reg;          // [nx, ny, kRegChannels]
};

CenterOutput center_head(const Tensor& bev, const CenterWeights& w);

struct CenterTargets {
    std::vector<double> heat;      // [nx, ny, K]
    std::vector<double> reg;          // [nx, ny, kRegChannels], meaningful at `cells` only
    std::vector<std::int64_t> cells;  // flat cell per in-grid box, one entry per box
    std::size_t nx = 0, ny = 0, classes = 0;
};

/// Gaussian radius in cells used for a box footprint.
double gaussian_sigma(const Box& box, double resolution);

/// Heat: per class, max over boxes of exp(-d^2 / (2 sigma^2)) with d the
/// cell distance to the box's centre cell (exactly 1 there). Regression
/// targets are written at each box's centre cell; a later box in the list
/// overwrites an earlier one sharing the cell.
CenterTargets center_targets(std::span<const Box> boxes, const geo::BevGrid& grid, std::size_t classes);

void encode_yaw(double yaw, double& s, double& c);
double decode_yaw(double s, double c);

/// 3x3 peak extraction. A cell survives when its score is >= every
/// neighbour with a higher flat index and > every neighbour with a lower
/// flat index, so of two equal adjacent peaks the lower flat index wins.
std::vector<Detection> decode_boxes(const Tensor& heat, const Tensor& reg, const geo::BevGrid& grid,
                                    double score_thresh, std::size_t max_dets);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean over rows with mask != 0 of -sum_k target[k] * log_softmax(logits)[k].
/// Returns a zero scalar when no row is valid.
Tensor depth_ce(const Tensor& logits, std::span<const double> targets, std::span<const std::uint8_t> valid);

/// Mean cross-entropy over voxels; logits [..., classes], one label per voxel.
/// Optional per-class weights scale each voxel's term (weighted mean).
Tensor occ_ce(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights = {});

/// Penalty-reduced focal loss on heat logits (alpha = 2, beta = 4),
/// normalized by max(1, number of cells with target == 1).
Tensor focal_loss(const Tensor& logits, std::span<const double> targets, double alpha = 2.0, double beta = 4.0);

/// Mean absolute error over the regression channels at the given cells.
Tensor box_l1(const Tensor& reg, std::span<const double> targets, std::span<const std::int64_t> cells);

// ---------------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------------

struct TrackerConfig {
    std::array<double, kObjectClasses> radius{2.0, 2.0, 1.0, 1.0};
    int max_age = 3;
};

struct Track {
    int id = 0;
    Detection last;
    int age = 0;  // frames since the last match
    int hits = 1;
};

struct Assignment {
    std::size_t detection = 0;
    int track_id = 0;
    bool spawned = false;
};

struct TrackStep {
    std::vector<Track> tracks;
    std::vector<Assignment> assignments;  // one per detection, in detection order
};

/// One tracking step. Tracks are propagated by their stored velocity * dt;
/// detections in descending score order (ties: ascending index) claim the
/// nearest unclaimed same-class track within the class radius (distance
/// ties: lower track id). Unmatched detections spawn tracks with ids from
/// next_id; unmatched tracks age and are dropped once age > max_age.
TrackStep greedy_track(const std::vector<Track>& tracks, const std::vector<Detection>& detections, double dt,
                       const TrackerConfig& config, int& next_id);

class Tracker {
  public:
    explicit Tracker(TrackerConfig config = {}) : config_(config) {}

    std::vector<Assignment> step(const std::vector<Detection>& detections, double dt);
    const std::vector<Track>& tracks() const { return tracks_; }

  private:
    TrackerConfig config_;
    std::vector<Track> tracks_;
    int next_id_ = 0;
};

/// One JSON object per frame: {"frame": i, "detections": [{"track_id",
/// "class", "score", "x", "y", "z", "l", "w", "h", "yaw", "vx", "vy"}, ...]}.
std::string frame_json_line(int frame, const std::vector<Detection>& detections,
                            const std::vector<Assignment>& assignments);

}  // namespace hydra::heads
