#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/model/train.hpp"

namespace hydra::model {

/// Bad invocation: missing inputs, refused overwrite, config/checkpoint
/// mismatch. The CLI maps it to exit code 2.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Split { all, train, eval };
Split parse_split(const std::string& s);

/// Scene i gets seed `config.seed + i` and is written as scene_%04d.json.
/// Refuses an existing `out` unless `force`.
void cmd_gen_scenes(const RunConfig& config, int n, const std::filesystem::path& out, bool force);

/// Scene files of `dir` in name order, restricted to the split given by
/// config.train_split.
std::vector<std::filesystem::path> scene_files(const std::filesystem::path& dir, const RunConfig& config,
                                               Split split);
std::vector<SceneData> load_scenes(const std::filesystem::path& dir, const RunConfig& config, Split split);

/// Writes model.hydb, loss.csv and config.txt under `out`; on divergence
/// writes diverged.json and rethrows.
std::vector<LossRow> cmd_train(const RunConfig& config, const std::filesystem::path& scenes,
                               const std::filesystem::path& out, Split split = Split::train);

/// Loads `ckpt` into a model built from `config` and writes metrics.json.
EvalReport cmd_eval(const RunConfig& config, const std::filesystem::path& ckpt, const std::filesystem::path& scenes,
                    const std::filesystem::path& out, Split split = Split::eval);

/// Writes ablation.csv and ablation.json.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, const std::filesystem::path& scenes,
                                    const std::filesystem::path& out);

struct PoolVerdict {
    bool fast_equals_naive = false;
    bool empty_cloud_ok = false;
    std::string csv;
    bool pass() const { return fast_equals_naive && empty_cloud_ok; }
};
/// Random-cloud bitwise comparison plus timing; writes bench_pool.csv.
PoolVerdict cmd_bench_pool(const std::filesystem::path& out, std::size_t pixels, std::uint64_t seed);

/// Writes depth_cam<k>.pgm, r.pgm, w_c.pgm, occ_z<k>.ppm and occ_gt_z<k>.ppm
/// for one frame. Returns the file names written.
std::vector<std::string> cmd_export_maps(const RunConfig& config, const std::filesystem::path& ckpt,
                                         const std::filesystem::path& scene, int frame,
                                         const std::filesystem::path& out, int scale = 8);

/// Maps [lo, hi] linearly onto 0..255, clamping outside.
std::uint8_t to_byte(double v, double lo, double hi);
std::string encode_pgm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& gray);
std::string encode_ppm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb);

}  // namespace hydra::model
