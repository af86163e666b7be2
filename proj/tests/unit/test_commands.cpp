#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hydra/model/commands.hpp"
#include "model_fixtures.hpp"

using namespace hydra;
using fixtures::tiny_config;
namespace fs = std::filesystem;

namespace {

class TempDir {
  public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() /
                ("hydra_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

  private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::size_t count_files(const fs::path& dir) {
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
    return n;
}

struct Pnm {
    std::string magic;
    std::size_t width = 0, height = 0, maxval = 0;
    std::string pixels;
};

Pnm parse_pnm(const std::string& bytes) {
    std::istringstream is(bytes);
    Pnm p;
    is >> p.magic >> p.width >> p.height >> p.maxval;
    is.get();  // single whitespace before the raster
    p.pixels.assign(std::istreambuf_iterator<char>(is), {});
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HYDRA_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(GenScenes, SameSeedSameBytes) {
    TempDir t;
    const auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 1, t / "a", false);
    model::cmd_gen_scenes(cfg, 1, t / "b", false);
    const auto a = slurp(t / "a" / "scene_0000.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(t / "b" / "scene_0000.json"));
}

TEST(GenScenes, ZeroScenesWritesNothing) {
    TempDir t;
    model::cmd_gen_scenes(tiny_config(), 0, t / "s", false);
    EXPECT_EQ(count_files(t / "s"), 0u);
}

TEST(GenScenes, ExistingDirectoryNeedsForce) {
    TempDir t;
    const auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 2, t / "s", false);
    EXPECT_THROW(model::cmd_gen_scenes(cfg, 2, t / "s", false), model::UsageError);
    EXPECT_NO_THROW(model::cmd_gen_scenes(cfg, 2, t / "s", true));
    EXPECT_EQ(count_files(t / "s"), 2u);
}

TEST(GenScenes, SceneSeedsFollowConfigSeed) {
    TempDir t;
    auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 2, t / "a", false);
    cfg.seed = 1;
    model::cmd_gen_scenes(cfg, 1, t / "b", false);
    EXPECT_EQ(slurp(t / "a" / "scene_0001.json"), slurp(t / "b" / "scene_0000.json"));
}

TEST(SceneFiles, SplitPartitionsSortedFiles) {
    TempDir t;
    auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 4, t / "s", false);
    const auto all = model::scene_files(t / "s", cfg, model::Split::all);
    const auto tr = model::scene_files(t / "s", cfg, model::Split::train);
    const auto ev = model::scene_files(t / "s", cfg, model::Split::eval);
    ASSERT_EQ(all.size(), 4u);
    ASSERT_EQ(tr.size(), 3u);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0], all[3]);
    EXPECT_THROW(model::scene_files(t / "missing", cfg, model::Split::all), model::UsageError);
    EXPECT_THROW(model::parse_split("test"), model::UsageError);
}

TEST(TrainEval, WritesArtifactsAndMetrics) {
    TempDir t;
    const auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 4, t / "s", false);
    const auto curve = model::cmd_train(cfg, t / "s", t / "run");
    EXPECT_EQ(curve.size(), 3u);
    EXPECT_EQ(slurp(t / "run" / "loss.csv"), model::loss_csv(curve));
    EXPECT_EQ(model::parse_config(slurp(t / "run" / "config.txt")).channels, cfg.channels);

    const auto rep = model::cmd_eval(cfg, t / "run" / "model.hydb", t / "s", t / "ev");
    const auto j = nlohmann::json::parse(slurp(t / "ev" / "metrics.json"));
    EXPECT_EQ(j, rep.to_json());
    for (const char* k : {"depth_abs_rel", "mate_like", "map_lite", "miou", "mota_lite", "id_switches"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
}

TEST(TrainEval, CheckpointProblemsAreUsageErrors) {
    TempDir t;
    auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 2, t / "s", false);
    EXPECT_THROW(model::cmd_eval(cfg, t / "nope.hydb", t / "s", t / "ev"), model::UsageError);
    model::cmd_train(cfg, t / "s", t / "run");
    cfg.channels = 6;
    EXPECT_THROW(model::cmd_eval(cfg, t / "run" / "model.hydb", t / "s", t / "ev"), model::UsageError);
}

TEST(TrainEval, NonFiniteLossWritesDiagnostics) {
    TempDir t;
    auto cfg = tiny_config();
    cfg.lr = 1e308;
    model::cmd_gen_scenes(cfg, 2, t / "s", false);
    EXPECT_THROW(model::cmd_train(cfg, t / "s", t / "run"), model::TrainingDiverged);
    const auto j = nlohmann::json::parse(slurp(t / "run" / "diverged.json"));
    EXPECT_TRUE(j.contains("params"));
    EXPECT_TRUE(j.contains("error"));
    EXPECT_FALSE(fs::exists(t / "run" / "model.hydb"));
}

TEST(Ablate, FourRowsAndCameraOnlyMatchesTrainEval) {
    TempDir t;
    auto cfg = tiny_config();
    cfg.steps = 2;
    model::cmd_gen_scenes(cfg, 4, t / "s", false);
    const auto rows = model::cmd_ablate(cfg, t / "s", t / "abl");
    ASSERT_EQ(rows.size(), 4u);
    const auto csv = slurp(t / "abl" / "ablation.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(nlohmann::json::parse(slurp(t / "abl" / "ablation.json")).size(), 4u);

    auto cam = cfg;
    cam.use_hat = cam.use_rdc = cam.use_radar_bev = false;
    model::cmd_train(cam, t / "s", t / "run");
    const auto rep = model::cmd_eval(cam, t / "run" / "model.hydb", t / "s", t / "ev");
    EXPECT_EQ(rows[0].report.to_json().dump(), rep.to_json().dump());
}

TEST(BenchPool, VerdictAndRows) {
    TempDir t;
    const auto v = model::cmd_bench_pool(t.path(), 20, 3);
    EXPECT_TRUE(v.fast_equals_naive);
    EXPECT_TRUE(v.empty_cloud_ok);
    EXPECT_EQ(slurp(t / "bench_pool.csv"), v.csv);
    for (const char* k : {"naive,", "fast_serial,", "fast_parallel,"}) EXPECT_NE(v.csv.find(k), std::string::npos) << k;
}

TEST(ExportMaps, ByteMappingEndpoints) {
    EXPECT_EQ(model::to_byte(1.0, 1.0, 16.0), 0);
    EXPECT_EQ(model::to_byte(16.0, 1.0, 16.0), 255);
    EXPECT_EQ(model::to_byte(-5.0, 0.0, 1.0), 0);
    EXPECT_EQ(model::to_byte(7.0, 0.0, 1.0), 255);
    EXPECT_EQ(model::to_byte(0.5, 0.0, 1.0), 128);
}

TEST(ExportMaps, FilesAreValidPnm) {
    TempDir t;
    auto cfg = tiny_config();
    model::cmd_gen_scenes(cfg, 2, t / "s", false);
    model::cmd_train(cfg, t / "s", t / "run");
    const auto files = model::cmd_export_maps(cfg, t / "run" / "model.hydb", t / "s" / "scene_0000.json", 1,
                                              t / "maps", 2);
    // 2 depth maps, r, w_c, and predicted + truth slices per layer
    EXPECT_EQ(files.size(), 2u + 2u + 2u * static_cast<std::size_t>(cfg.nz));
    for (const auto& f : files) {
        const auto p = parse_pnm(slurp(t / "maps" / f));
        const std::size_t depth = p.magic == "P6" ? 3 : 1;
        EXPECT_TRUE(p.magic == "P5" || p.magic == "P6") << f;
        EXPECT_EQ(p.maxval, 255u) << f;
        EXPECT_EQ(p.pixels.size(), p.width * p.height * depth) << f;
    }
    const auto occ = parse_pnm(slurp(t / "maps" / "occ_z0.ppm"));
    EXPECT_EQ(occ.width, static_cast<std::size_t>(cfg.grid_n) * 2);
    EXPECT_THROW(model::cmd_export_maps(cfg, t / "run" / "model.hydb", t / "s" / "scene_0000.json", 99, t / "m2"),
                 model::UsageError);
}

TEST(ExportMaps, RadarGuidanceIsUniformGrayWithoutRadar) {
    TempDir t;
    auto cfg = tiny_config();
    cfg.min_boxes = cfg.max_boxes = 0;  // radar returns come only from objects
    cfg.steps = 0;
    model::cmd_gen_scenes(cfg, 1, t / "s", false);
    model::cmd_train(cfg, t / "s", t / "run", model::Split::all);
    model::cmd_export_maps(cfg, t / "run" / "model.hydb", t / "s" / "scene_0000.json", 0, t / "maps", 1);
    const auto r = parse_pnm(slurp(t / "maps" / "r.pgm"));
    ASSERT_FALSE(r.pixels.empty());
    for (char px : r.pixels) ASSERT_EQ(static_cast<unsigned char>(px), 128);
}

TEST(Cli, ExitCodes) {
    TempDir t;
    const auto dir = (t / "s").string();
    EXPECT_EQ(run_cli("gen-scenes -n 1 --set grid_n=8 --out " + dir), 0);
    EXPECT_EQ(run_cli("gen-scenes -n 1 --out " + dir), 2);
    EXPECT_EQ(run_cli("gen-scenes -n 0 --force --out " + dir), 0);
    EXPECT_EQ(run_cli("eval --ckpt " + (t / "missing.hydb").string() + " --scenes " + dir + " --out " + dir), 2);
    EXPECT_EQ(run_cli("config --set no_such_key=1"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("config --seed 9"), 0);
}
