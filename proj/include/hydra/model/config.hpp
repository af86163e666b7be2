#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/geometry/geometry.hpp"
#include "hydra/sim/scene.hpp"

namespace hydra::model {

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Every field has a default. Text form is one `key = value` per line;
/// `#` starts a comment. Unknown keys and malformed values are errors.
struct RunConfig {
    // sensors and geometry
    int cameras = 2;
    int feat_h = 4;
    int feat_w = 11;
    int downsample = 16;
    int image_pool = 4;
    int depth_bins = 30;
    double d_min = 1.0;
    double d_step = 0.5;
    int grid_n = 32;
    double grid_res = 0.8;
    int nz = 4;

    // model
    int channels = 32;
    int radar_channels = 32;
    int heads = 4;
    int rdc_points = 4;
    int occ_channels = 8;

    // scenes
    int frames = 2;
    double dt = 0.5;
    int min_boxes = 2;
    int max_boxes = 5;
    bool radar_noise = true;
    int radar_points = 3;

    // training
    int steps = 500;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int batch = 1;
    double train_split = 0.75;
    double w_depth = 1.0;
    double w_occ = 1.0;
    double w_heat = 1.0;
    double w_box = 1.0;

    // decoding
    double score_thresh = 0.3;
    int max_dets = 20;

    // ablation axes
    bool use_hat = true;
    bool use_rdc = true;
    bool use_radar_bev = true;
    bool use_depth_supervision = true;
    bool use_history = false;

    geo::FrustumSpec frustum() const;
    geo::BevGrid grid() const;
    sim::OccGrid occ_grid() const;
    sim::SceneConfig scene_config() const;
    sim::RadarNoise noise() const;
    bool needs_radar() const { return use_hat || use_rdc || use_radar_bev; }

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Applies `key = value` lines on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
/// Every key, in declaration order, with round-trip exact doubles.
std::string serialize_config(const RunConfig& config);
/// Single assignment, e.g. from a command-line override.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace hydra::model
