#include "hydra/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace hydra::model {

void Adam::step(ad::ParamStore& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& [name, tensor] : params.tensors()) {
        if (!tensor.has_grad()) continue;
        auto t = tensor;  // shares storage
        const auto g = t.grad();
        auto p = t.mutable_data();
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

std::string loss_csv(const std::vector<LossRow>& rows) {
    std::string out = "step,total,depth,occ,heat,box\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.total, r.depth, r.occ, r.heat,
                      r.box);
        out += buf;
    }
    return out;
}

namespace {

nlohmann::json diagnostic_dump(const Model& model, int step, const LossTerms& terms) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, t] : model.params().tensors()) {
        double max_abs = 0.0, grad_sq = 0.0;
        bool finite = true;
        for (double v : t.data()) {
            finite = finite && std::isfinite(v);
            max_abs = std::max(max_abs, std::fabs(v));
        }
        if (t.has_grad()) {
            for (double g : t.grad()) grad_sq += g * g;
        }
        params[name] = {{"max_abs", finite ? nlohmann::json(max_abs) : nlohmann::json(nullptr)},
                        {"grad_norm", std::isfinite(grad_sq) ? nlohmann::json(std::sqrt(grad_sq)) : nlohmann::json(nullptr)},
                        {"finite", finite}};
    }
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(std::to_string(v)); };
    return {{"step", step},
            {"loss", {{"depth", num(terms.depth)}, {"occ", num(terms.occ)}, {"heat", num(terms.heat)}, {"box", num(terms.box)}}},
            {"params", params}};
}

}  // namespace

std::vector<LossRow> train(Model& model, const std::vector<SceneData>& scenes,
                           const std::function<void(const LossRow&)>& progress) {
    const auto& cfg = model.config();
    std::vector<std::pair<std::size_t, std::size_t>> samples;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t f = 0; f < scenes[s].frames.size(); ++f) samples.emplace_back(s, f);
    }
    if (samples.empty() && cfg.steps > 0) throw std::invalid_argument("train: no training samples");

    std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    Adam adam(cfg.lr);
    std::vector<LossRow> curve;
    auto& tape = ad::Tape::current();
    for (int step = 0; step < cfg.steps; ++step) {
        model.params().zero_grad();
        LossRow row;
        row.step = step;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto [s, f] = samples[order[cursor++]];
            tape.clear();
            LossTerms terms;
            double total = 0.0;
            try {
                const auto out = model.forward(scenes[s], f);
                terms = model.loss(out, scenes[s].frames[f]);
                total = terms.total.item();
                if (std::isfinite(total)) ad::backward(ad::scale(terms.total, 1.0 / cfg.batch));
            } catch (const ad::NumericError& e) {
                // ops refuse to emit NaN/Inf, so most blow-ups surface here
                tape.clear();
                throw TrainingDiverged("train: step " + std::to_string(step) + ": " + e.what(),
                                       diagnostic_dump(model, step, terms));
            }
            tape.clear();
            if (!std::isfinite(total)) {
                throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step),
                                       diagnostic_dump(model, step, terms));
            }
            const double inv = 1.0 / cfg.batch;
            row.total += total * inv;
            row.depth += terms.depth * inv;
            row.occ += terms.occ * inv;
            row.heat += terms.heat * inv;
            row.box += terms.box * inv;
        }
        adam.step(model.params());
        curve.push_back(row);
        if (progress) progress(row);
    }
    return curve;
}

namespace {

Box to_world(const Box& b, const sim::Pose2& ego) {
    Box w = b;
    const auto p = sim::ego_to_world(ego, b.x, b.y);
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    w.x = p.x();
    w.y = p.y();
    w.yaw = b.yaw + ego.yaw;
    w.vx = c * b.vx - s * b.vy;
    w.vy = s * b.vx + c * b.vy;
    return w;
}

}  // namespace

EvalReport evaluate(Model& model, const std::vector<SceneData>& scenes) {
    ad::NoGradGuard no_grad;
    const auto& cfg = model.config();
    const auto spec = cfg.frustum();
    EvalReport rep;
    std::vector<sim::FrameEval> det_frames;
    sim::MiouAccumulator occ;
    std::vector<double> depth_pred, depth_gt;
    std::vector<std::uint8_t> depth_valid;

    for (const auto& scene : scenes) {
        heads::Tracker tracker;
        std::vector<sim::TrackedFrame> seq;
        for (std::size_t f = 0; f < scene.frames.size(); ++f) {
            const auto& frame = scene.frames[f];
            const auto out = model.forward(scene, f);
            ++rep.frames;

            const auto d = out.depth.data();
            const std::size_t bins = static_cast<std::size_t>(spec.depth_bins);
            for (std::size_t p = 0; p < frame.depth_valid.size(); ++p) {
                double e = 0.0;
                for (std::size_t k = 0; k < bins; ++k) e += d[p * bins + k] * spec.bin_center(static_cast<int>(k));
                depth_pred.push_back(e);
            }
            depth_gt.insert(depth_gt.end(), frame.depth_gt.begin(), frame.depth_gt.end());
            depth_valid.insert(depth_valid.end(), frame.depth_valid.begin(), frame.depth_valid.end());

            occ.add(heads::occupancy_argmax(out.occ_logits), frame.occupancy);

            const auto dets = model.detect(out);
            rep.detections += dets.size();
            rep.truth_boxes += frame.boxes.size();
            det_frames.push_back({dets, frame.boxes});

            std::vector<Detection> world;
            for (const auto& det : dets) world.push_back({to_world(det.box, frame.ego), det.score});
            const auto assign = tracker.step(world, cfg.dt);
            sim::TrackedFrame tf;
            tf.preds = world;
            for (const auto& a : assign) tf.track_ids.push_back(a.track_id);
            for (const auto& b : frame.boxes) tf.truth.push_back(to_world(b, frame.ego));
            seq.push_back(std::move(tf));
        }
        const auto m = sim::mota_lite(seq);
        rep.mota.fp += m.fp;
        rep.mota.fn += m.fn;
        rep.mota.id_switches += m.id_switches;
        rep.mota.gt += m.gt;
    }
    if (rep.mota.gt > 0) {
        rep.mota.mota = sim::Metric::of(1.0 - static_cast<double>(rep.mota.fp + rep.mota.fn + rep.mota.id_switches) /
                                                  static_cast<double>(rep.mota.gt));
    }
    rep.depth_abs_rel = sim::depth_abs_rel(depth_pred, depth_gt, depth_valid);
    rep.mate_like = sim::mate_like(det_frames);
    rep.map_lite = sim::map_lite(det_frames);
    const auto iou = occ.result();
    rep.miou = iou.miou;
    rep.class_iou = iou.per_class;
    return rep;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < class_iou.size() && c < kClassNames.size(); ++c) {
        per_class[std::string(kClassNames[c])] = sim::to_json(class_iou[c]);
    }
    return {{"depth_abs_rel", sim::to_json(depth_abs_rel)},
            {"mate_like", sim::to_json(mate_like)},
            {"map_lite", sim::to_json(map_lite)},
            {"miou", sim::to_json(miou)},
            {"class_iou", per_class},
            {"mota_lite", sim::to_json(mota.mota)},
            {"id_switches", mota.id_switches},
            {"fp", mota.fp},
            {"fn", mota.fn},
            {"frames", frames},
            {"detections", detections},
            {"truth_boxes", truth_boxes}};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_split) {
    std::size_t n_train = static_cast<std::size_t>(std::floor(n * train_split));
    n_train = std::min(n, std::max<std::size_t>(n ? 1 : 0, n_train));
    std::vector<std::size_t> tr(n_train), ev(n - n_train);
    std::iota(tr.begin(), tr.end(), 0);
    std::iota(ev.begin(), ev.end(), n_train);
    return {tr, ev};
}

std::vector<std::pair<std::string, RunConfig>> ablation_lattice(const RunConfig& base) {
    std::vector<std::pair<std::string, RunConfig>> rows;
    auto make = [&](const char* name, bool hat, bool rdc) {
        RunConfig c = base;
        c.use_hat = hat;
        c.use_rdc = rdc;
        c.use_radar_bev = rdc;
        rows.emplace_back(name, c);
    };
    make("camera-only", false, false);
    make("+HAT", true, false);
    make("+RDC", false, true);
    make("+HAT+RDC", true, true);
    return rows;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<SceneData>& train_scenes,
                                      const std::vector<SceneData>& eval_scenes,
                                      const std::function<void(const std::string&)>& log) {
    std::vector<AblationRow> rows;
    for (const auto& [name, cfg] : ablation_lattice(base)) {
        if (log) log("ablate: training " + name);
        Model model(cfg);
        train(model, train_scenes);
        rows.push_back({name, cfg, evaluate(model, eval_scenes)});
    }
    return rows;
}

namespace {

std::string fmt(const sim::Metric& m) {
    if (!m.defined) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", m.value);
    return buf;
}

}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "config,use_hat,use_rdc,use_radar_bev,seed,depth_abs_rel,mate_like,map_lite,miou,mota_lite,id_switches\n";
    for (const auto& r : rows) {
        os << r.name << ',' << r.config.use_hat << ',' << r.config.use_rdc << ',' << r.config.use_radar_bev << ','
           << r.config.seed << ',' << fmt(r.report.depth_abs_rel) << ',' << fmt(r.report.mate_like) << ','
           << fmt(r.report.map_lite) << ',' << fmt(r.report.miou) << ',' << fmt(r.report.mota.mota) << ','
           << r.report.mota.id_switches << '\n';
    }
    return os.str();
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"config", r.name},
                       {"use_hat", r.config.use_hat},
                       {"use_rdc", r.config.use_rdc},
                       {"use_radar_bev", r.config.use_radar_bev},
                       {"seed", r.config.seed},
                       {"metrics", r.report.to_json()}});
    }
    return out;
}

}  // namespace hydra::model
