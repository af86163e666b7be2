#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "hydra/types.hpp"

namespace hydra::sim {

/// A metric that can be undefined (e.g. empty truth). Undefined values
/// serialize as null, never as NaN.
struct Metric {
    double value = 0.0;
    bool defined = false;

    static Metric of(double v) { return {v, true}; }
    static Metric undefined() { return {}; }
};

nlohmann::json to_json(const Metric& m);

/// Mean |pred - truth| / truth over entries with valid != 0.
Metric depth_abs_rel(std::span<const double> pred, std::span<const double> truth, std::span<const std::uint8_t> valid);

struct CenterMatch {
    std::size_t pred = 0;
    std::size_t truth = 0;
    double distance = 0.0;
};

/// Predictions in descending score order (ties: lower index) claim the
/// nearest unclaimed same-class truth within `threshold` metres (ties:
/// lower truth index).
std::vector<CenterMatch> greedy_center_match(std::span<const Detection> preds, std::span<const Box> truth,
                                             double threshold);

/// Matching for one frame of a multi-frame metric.
struct FrameEval {
    std::vector<Detection> preds;
    std::vector<Box> truth;
};

/// Mean centre distance over true positives matched at 2 m, pooled over frames.
Metric mate_like(std::span<const FrameEval> frames, double threshold = 2.0);

/// AP per (class, threshold) over thresholds {0.5, 1, 2, 4} m, averaged over
/// classes that have truth and over thresholds. AP is the 101-point
/// interpolated area under the precision/recall curve.
Metric map_lite(std::span<const FrameEval> frames);

/// IoU per class (excluding free) with non-empty union; the mean over those.
struct MiouResult {
    Metric miou;
    std::vector<Metric> per_class;  // size classes, free left undefined
};
MiouResult miou(std::span<const int> pred, std::span<const int> truth, int classes = kOccClasses,
                int ignore_class = kFreeClass);

/// Accumulates intersections and unions across frames.
class MiouAccumulator {
  public:
    explicit MiouAccumulator(int classes = kOccClasses, int ignore_class = kFreeClass);
    void add(std::span<const int> pred, std::span<const int> truth);
    MiouResult result() const;

  private:
    int classes_, ignore_;
    std::vector<std::uint64_t> inter_, uni_;
};

struct TrackedFrame {
    std::vector<Detection> preds;  // world frame
    std::vector<int> track_ids;    // one per prediction
    std::vector<Box> truth;        // world frame, Box::id set
};

struct MotaResult {
    Metric mota;
    std::size_t fp = 0, fn = 0, id_switches = 0, gt = 0;
};

/// 1 - (FP + FN + IDS) / GT over a sequence. Per frame, predictions are
/// matched with greedy_center_match at `threshold`; an ID switch is a truth
/// object whose matched track id differs from its previous matched one.
MotaResult mota_lite(std::span<const TrackedFrame> frames, double threshold = 2.0);

}  // namespace hydra::sim
