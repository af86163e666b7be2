#include "hydra/model/commands.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hydra/io.hpp"
#include "hydra/tensor/checkpoint.hpp"

namespace fs = std::filesystem;

namespace hydra::model {

Split parse_split(const std::string& s) {
    if (s == "all") return Split::all;
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    throw UsageError("unknown split '" + s + "' (all, train, eval)");
}

void cmd_gen_scenes(const RunConfig& config, int n, const fs::path& out, bool force) {
    if (n < 0) throw UsageError("gen-scenes: n must be >= 0");
    if (fs::exists(out) && !force) throw UsageError("gen-scenes: " + out.string() + " exists (use --force)");
    fs::create_directories(out);
    const auto sc = config.scene_config();
    char name[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(name, sizeof name, "scene_%04d.json", i);
        sim::save_scene(out / name, sim::generate_scene(sc, config.seed + static_cast<std::uint64_t>(i)));
    }
}

std::vector<fs::path> scene_files(const fs::path& dir, const RunConfig& config, Split split) {
    if (!fs::is_directory(dir)) throw UsageError("scene directory " + dir.string() + " not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (split == Split::all) return files;
    const auto [tr, ev] = split_indices(files.size(), config.train_split);
    std::vector<fs::path> out;
    for (auto i : split == Split::train ? tr : ev) out.push_back(files[i]);
    return out;
}

std::vector<SceneData> load_scenes(const fs::path& dir, const RunConfig& config, Split split) {
    std::vector<SceneData> out;
    for (const auto& f : scene_files(dir, config, split)) out.push_back(prepare_scene(sim::load_scene(f), config));
    return out;
}

std::vector<LossRow> cmd_train(const RunConfig& config, const fs::path& scenes, const fs::path& out, Split split) {
    const auto data = load_scenes(scenes, config, split);
    if (data.empty() && config.steps > 0) throw UsageError("train: no scenes in " + scenes.string());
    fs::create_directories(out);
    Model model(config);
    std::vector<LossRow> curve;
    try {
        curve = train(model, data);
    } catch (const TrainingDiverged& e) {
        auto dump = e.dump();
        dump["error"] = e.what();
        io::atomic_write(out / "diverged.json", dump.dump(2) + "\n");
        throw;
    }
    ad::save_bundle(out / "model.hydb", model.params().tensors());
    io::atomic_write(out / "loss.csv", loss_csv(curve));
    io::atomic_write(out / "config.txt", serialize_config(config));
    return curve;
}

namespace {

void load_checkpoint(Model& model, const fs::path& ckpt) {
    if (!fs::is_regular_file(ckpt)) throw UsageError("checkpoint " + ckpt.string() + " not found");
    try {
        model.params().load(ad::load_bundle(ckpt));
    } catch (const ad::ShapeError& e) {
        throw UsageError(std::string("checkpoint does not match config: ") + e.what());
    }
}

}  // namespace

EvalReport cmd_eval(const RunConfig& config, const fs::path& ckpt, const fs::path& scenes, const fs::path& out,
                    Split split) {
    Model model(config);
    load_checkpoint(model, ckpt);
    const auto data = load_scenes(scenes, config, split);
    const auto report = evaluate(model, data);
    fs::create_directories(out);
    io::atomic_write(out / "metrics.json", report.to_json().dump(2) + "\n");
    return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, const fs::path& scenes, const fs::path& out) {
    const auto tr = load_scenes(scenes, config, Split::train);
    const auto ev = load_scenes(scenes, config, Split::eval);
    if (tr.empty()) throw UsageError("ablate: no scenes in " + scenes.string());
    const auto rows = run_ablation(config, tr, ev);
    fs::create_directories(out);
    io::atomic_write(out / "ablation.csv", ablation_csv(rows));
    io::atomic_write(out / "ablation.json", ablation_json(rows).dump(2) + "\n");
    return rows;
}

PoolVerdict cmd_bench_pool(const fs::path& out, std::size_t pixels, std::uint64_t seed) {
    ad::NoGradGuard no_grad;
    constexpr std::size_t kDepth = 30, kChannels = 16, kGrid = 128;
    PoolVerdict v;

    auto equal_on = [&](std::size_t n) {
        std::mt19937_64 rng(seed + n);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        geo::BevGrid grid;
        grid.nx = grid.ny = static_cast<int>(kGrid);
        grid.origin_y = -0.4 * static_cast<double>(kGrid);
        const double extent = grid.resolution * static_cast<double>(kGrid);
        std::vector<double> dv(n * kDepth), cv(n * kChannels);
        for (auto& x : dv) x = unit(rng);
        for (auto& x : cv) x = unit(rng);
        view::FrustumFeatureCloud cloud;
        cloud.features = view::outer_product_lift(Tensor::from({n, kDepth}, dv), Tensor::from({n, kChannels}, cv));
        cloud.points.resize(n * kDepth);
        for (auto& p : cloud.points) p = {unit(rng) * extent * 1.1, grid.origin_y + unit(rng) * extent * 1.1, 0.0};
        const auto index = view::build_pooling_index(view::point_cells(cloud.points, grid), kGrid, kGrid);
        const auto a = view::bev_pool_naive(cloud, grid);
        const auto b = view::bev_pool_fast(cloud, index, view::Exec::serial);
        const auto c = view::bev_pool_fast(cloud, index, view::Exec::parallel);
        return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()) &&
               std::equal(a.data().begin(), a.data().end(), c.data().begin(), c.data().end());
    };
    v.fast_equals_naive = equal_on(pixels);
    v.empty_cloud_ok = equal_on(0);

    v.csv = view::pool_bench_csv(view::run_pool_benchmark(pixels, kDepth, kChannels, kGrid, 5, seed));
    const auto empty = view::run_pool_benchmark(0, kDepth, kChannels, kGrid, 1, seed);
    v.empty_cloud_ok = v.empty_cloud_ok && empty.size() == 3;
    fs::create_directories(out);
    io::atomic_write(out / "bench_pool.csv", v.csv);
    return v;
}

std::uint8_t to_byte(double v, double lo, double hi) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

std::string encode_pgm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& gray) {
    if (gray.size() != width * height) throw std::invalid_argument("encode_pgm: size mismatch");
    std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    s.append(gray.begin(), gray.end());
    return s;
}

std::string encode_ppm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != 3 * width * height) throw std::invalid_argument("encode_ppm: size mismatch");
    std::string s = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    s.append(rgb.begin(), rgb.end());
    return s;
}

namespace {

// car, truck, pedestrian, cyclist, drivable, free
constexpr std::uint8_t kPalette[kOccClasses][3] = {
    {220, 40, 40}, {240, 150, 30}, {40, 90, 230}, {200, 60, 200}, {120, 120, 120}, {0, 0, 0}};

// BEV images put +x (forward) up and +y (left) on the left.
template <class F>
std::vector<std::uint8_t> bev_image(std::size_t nx, std::size_t ny, int scale, std::size_t depth, F&& pixel) {
    const std::size_t s = static_cast<std::size_t>(scale), w = ny * s;
    std::vector<std::uint8_t> img(nx * s * w * depth);
    for (std::size_t r = 0; r < nx * s; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = nx - 1 - r / s, j = ny - 1 - c / s;
            pixel(i * ny + j, &img[(r * w + c) * depth]);
        }
    }
    return img;
}

}  // namespace

std::vector<std::string> cmd_export_maps(const RunConfig& config, const fs::path& ckpt, const fs::path& scene_path,
                                         int frame, const fs::path& out, int scale) {
    if (scale < 1) throw UsageError("export-maps: scale must be >= 1");
    if (!fs::is_regular_file(scene_path)) throw UsageError("scene " + scene_path.string() + " not found");
    Model model(config);
    load_checkpoint(model, ckpt);
    const auto scene = sim::load_scene(scene_path);
    if (frame < 0 || frame >= scene.frames()) throw UsageError("export-maps: frame out of range");
    const auto data = prepare_scene(scene, config);

    ad::NoGradGuard no_grad;
    const auto o = model.forward(data, static_cast<std::size_t>(frame));
    const auto spec = config.frustum();
    const auto grid = config.grid();
    const std::size_t nx = static_cast<std::size_t>(grid.nx), ny = static_cast<std::size_t>(grid.ny);
    const std::size_t s = static_cast<std::size_t>(scale);
    fs::create_directories(out);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& bytes) {
        io::atomic_write(out / name, bytes);
        written.push_back(name);
    };

    // expected depth per feature pixel, [d_min, d_max] -> [0, 255]
    const std::size_t fh = static_cast<std::size_t>(spec.feat_h), fw = static_cast<std::size_t>(spec.feat_w);
    const std::size_t bins = static_cast<std::size_t>(spec.depth_bins);
    const double d_max = spec.d_min + spec.d_step * static_cast<double>(bins);
    const auto d = o.depth.data();
    for (std::size_t cam = 0; cam < o.depth.dim(0); ++cam) {
        std::vector<std::uint8_t> img(fh * s * fw * s);
        for (std::size_t r = 0; r < fh * s; ++r) {
            for (std::size_t c = 0; c < fw * s; ++c) {
                const std::size_t p = (cam * fh + r / s) * fw + c / s;
                double e = 0.0;
                for (std::size_t k = 0; k < bins; ++k) e += d[p * bins + k] * spec.bin_center(static_cast<int>(k));
                img[r * fw * s + c] = to_byte(e, spec.d_min, d_max);
            }
        }
        emit("depth_cam" + std::to_string(cam) + ".pgm", encode_pgm(fw * s, fh * s, img));
    }

    if (o.guidance.defined()) {
        const auto r = o.guidance.data();
        emit("r.pgm", encode_pgm(ny * s, nx * s, bev_image(nx, ny, scale, 1, [&](std::size_t cell, std::uint8_t* px) {
                                     px[0] = to_byte(r[cell], 0.0, 1.0);
                                 })));
    }
    if (o.w_c.defined()) {
        // max over cameras and reference heights; cells without rays stay 0
        std::vector<double> best(nx * ny, 0.0);
        const auto& rays = model.geometry(data.rig).rays;
        const auto w = o.w_c.data();
        for (std::size_t e = 0; e < rays.entries.size(); ++e) {
            auto& b = best[static_cast<std::size_t>(rays.entries[e].cell)];
            b = std::max(b, w[e]);
        }
        emit("w_c.pgm", encode_pgm(ny * s, nx * s, bev_image(nx, ny, scale, 1, [&](std::size_t cell, std::uint8_t* px) {
                                       px[0] = to_byte(best[cell], 0.0, 1.0);
                                   })));
    }

    const auto pred = heads::occupancy_argmax(o.occ_logits);
    const auto& truth = data.frames[static_cast<std::size_t>(frame)].occupancy;
    const std::size_t nz = static_cast<std::size_t>(config.nz);
    for (std::size_t z = 0; z < nz; ++z) {
        for (const auto& [label, vol] : {std::pair{"occ_z", &pred}, std::pair{"occ_gt_z", &truth}}) {
            const auto img = bev_image(nx, ny, scale, 3, [&](std::size_t cell, std::uint8_t* px) {
                const auto& col = kPalette[(*vol)[cell * nz + z]];
                std::copy(col, col + 3, px);
            });
            emit(std::string(label) + std::to_string(z) + ".ppm", encode_ppm(ny * s, nx * s, img));
        }
    }
    return written;
}

}  // namespace hydra::model
