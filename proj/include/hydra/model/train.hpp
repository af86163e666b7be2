#pragma once

#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/model/pipeline.hpp"
#include "hydra/sim/metrics.hpp"

namespace hydra::model {

/// Adam with bias correction, no weight decay.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    /// Updates every parameter that received a gradient.
    void step(ad::ParamStore& params);
    long steps() const { return t_; }

  private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct LossRow {
    int step = 0;
    double total = 0.0, depth = 0.0, occ = 0.0, heat = 0.0, box = 0.0;
};

/// Header `step,total,depth,occ,heat,box`; values printed round-trip exact.
std::string loss_csv(const std::vector<LossRow>& rows);

class TrainingDiverged : public std::runtime_error {
  public:
    TrainingDiverged(const std::string& what, nlohmann::json dump)
        : std::runtime_error(what), dump_(std::move(dump)) {}
    const nlohmann::json& dump() const { return dump_; }

  private:
    nlohmann::json dump_;
};

/// Training samples are every (scene, frame) pair, visited in an order
/// reshuffled each epoch from the config seed. Throws TrainingDiverged on a
/// non-finite loss.
std::vector<LossRow> train(Model& model, const std::vector<SceneData>& scenes,
                           const std::function<void(const LossRow&)>& progress = {});

struct EvalReport {
    sim::Metric depth_abs_rel, mate_like, map_lite, miou;
    sim::MotaResult mota;
    std::vector<sim::Metric> class_iou;
    std::size_t frames = 0, detections = 0, truth_boxes = 0;

    nlohmann::json to_json() const;
};

EvalReport evaluate(Model& model, const std::vector<SceneData>& scenes);

/// First floor(n * train_split) indices train (at least one), the rest evaluate.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_split);

struct AblationRow {
    std::string name;
    RunConfig config;
    EvalReport report;
};

/// {camera-only, +HAT, +RDC, +HAT+RDC}; every other key is taken from `base`.
std::vector<std::pair<std::string, RunConfig>> ablation_lattice(const RunConfig& base);

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<SceneData>& train_scenes,
                                      const std::vector<SceneData>& eval_scenes,
                                      const std::function<void(const std::string&)>& log = {});
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace hydra::model
