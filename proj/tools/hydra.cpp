#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "hydra/model/commands.hpp"

using namespace hydra;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;

    model::RunConfig config() const {
        model::RunConfig c = config_path.empty() ? model::RunConfig{} : model::load_config(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw model::UsageError("--set expects key=value, got '" + kv + "'");
            model::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_set) c.seed = seed;
        c.validate();
        return c;
    }
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
    sub->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
    sub->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& s) {
        c.seed = s;
        c.seed_set = true;
    }, "overrides the config seed");
    auto* out = sub->add_option("--out", c.out, "output directory");
    if (needs_out) out->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hydra: camera-radar BEV perception toy pipeline"};
    app.require_subcommand(1);
    Common common;

    int n = 0;
    bool force = false;
    auto* gen = app.add_subcommand("gen-scenes", "write n seeded synthetic scenes");
    add_common(gen, common);
    gen->add_option("-n,--n", n, "number of scenes")->required();
    gen->add_flag("--force", force, "overwrite an existing output directory");

    std::string scenes, split = "train";
    auto* trn = app.add_subcommand("train", "train a model; writes model.hydb, loss.csv, config.txt");
    add_common(trn, common);
    trn->add_option("--scenes", scenes, "scene directory")->required();
    trn->add_option("--split", split, "all | train | eval");

    std::string ckpt, eval_split = "eval";
    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint; writes metrics.json");
    add_common(evl, common);
    evl->add_option("--ckpt", ckpt, "checkpoint (model.hydb)")->required();
    evl->add_option("--scenes", scenes, "scene directory")->required();
    evl->add_option("--split", eval_split, "all | train | eval");

    auto* abl = app.add_subcommand("ablate", "train and evaluate the four fusion variants");
    add_common(abl, common);
    abl->add_option("--scenes", scenes, "scene directory")->required();

    std::size_t pixels = 334;  // x 30 bins, about 10k points
    auto* bench = app.add_subcommand("bench-pool", "BEV pooling kernels: correctness verdict and timings");
    add_common(bench, common);
    bench->add_option("--pixels", pixels, "frustum pixels per cloud (30 depth bins each)");

    std::string scene_file;
    int frame = 0, scale = 8;
    auto* exp = app.add_subcommand("export-maps", "PGM/PPM maps of depth, r, w_c and occupancy");
    add_common(exp, common);
    exp->add_option("--ckpt", ckpt, "checkpoint (model.hydb)")->required();
    exp->add_option("--scene", scene_file, "scene JSON")->required();
    exp->add_option("--frame", frame, "frame index");
    exp->add_option("--scale", scale, "pixels per cell");

    auto* show = app.add_subcommand("config", "print the effective config");
    add_common(show, common, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto cfg = common.config();
        const fs::path out = common.out;
        if (*gen) {
            model::cmd_gen_scenes(cfg, n, out, force);
            std::printf("wrote %d scenes to %s\n", n, out.c_str());
        } else if (*trn) {
            const auto curve = model::cmd_train(cfg, scenes, out, model::parse_split(split));
            if (!curve.empty()) {
                std::printf("trained %zu steps, loss %.4f -> %.4f\n", curve.size(), curve.front().total,
                            curve.back().total);
            }
        } else if (*evl) {
            const auto rep = model::cmd_eval(cfg, ckpt, scenes, out, model::parse_split(eval_split));
            std::cout << rep.to_json().dump(2) << "\n";
        } else if (*abl) {
            const auto rows = model::cmd_ablate(cfg, scenes, out);
            std::cout << model::ablation_csv(rows);
        } else if (*bench) {
            const auto v = model::cmd_bench_pool(out, pixels, cfg.seed);
            std::cout << v.csv;
            std::printf("fast==naive: %s\nempty cloud: %s\n", v.fast_equals_naive ? "PASS" : "FAIL",
                        v.empty_cloud_ok ? "PASS" : "FAIL");
            return v.pass() ? 0 : 1;
        } else if (*exp) {
            for (const auto& f : model::cmd_export_maps(cfg, ckpt, scene_file, frame, out, scale)) {
                std::printf("%s\n", (out / f).c_str());
            }
        } else if (*show) {
            std::cout << model::serialize_config(cfg);
        }
    } catch (const model::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const model::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const model::TrainingDiverged& e) {
        std::fprintf(stderr, "error: %s (diagnostics in diverged.json)\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
