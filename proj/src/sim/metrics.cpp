#include "hydra/sim/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace hydra::sim {

nlohmann::json to_json(const Metric& m) { return m.defined ? nlohmann::json(m.value) : nlohmann::json(nullptr); }

Metric depth_abs_rel(std::span<const double> pred, std::span<const double> truth, std::span<const std::uint8_t> valid) {
    if (pred.size() != truth.size() || pred.size() != valid.size()) {
        throw std::invalid_argument("depth_abs_rel: size mismatch");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!valid[i]) continue;
        sum += std::fabs(pred[i] - truth[i]) / truth[i];
        ++n;
    }
    return n ? Metric::of(sum / n) : Metric::undefined();
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    return order;
}

double center_distance(const Box& a, const Box& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

std::vector<CenterMatch> greedy_center_match(std::span<const Detection> preds, std::span<const Box> truth,
                                             double threshold) {
    std::vector<CenterMatch> out;
    std::vector<std::uint8_t> taken(truth.size(), 0);
    for (const auto p : score_order(preds)) {
        double best = threshold;
        std::size_t best_t = truth.size();
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (taken[t] || truth[t].cls != preds[p].box.cls) continue;
            const double d = center_distance(preds[p].box, truth[t]);
            if (d < best || (d == best && best_t == truth.size())) {
                best = d;
                best_t = t;
            }
        }
        if (best_t < truth.size()) {
            taken[best_t] = 1;
            out.push_back({p, best_t, best});
        }
    }
    return out;
}

Metric mate_like(std::span<const FrameEval> frames, double threshold) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames) {
        for (const auto& m : greedy_center_match(f.preds, f.truth, threshold)) {
            sum += m.distance;
            ++n;
        }
    }
    return n ? Metric::of(sum / n) : Metric::undefined();
}

Metric map_lite(std::span<const FrameEval> frames) {
    constexpr std::array<double, 4> kThresholds{0.5, 1.0, 2.0, 4.0};
    double total = 0.0;
    int terms = 0;
    for (int cls = 0; cls < kObjectClasses; ++cls) {
        std::size_t n_gt = 0;
        for (const auto& f : frames) {
            for (const auto& b : f.truth) n_gt += b.cls == cls;
        }
        if (n_gt == 0) continue;
        for (const double thr : kThresholds) {
            // (score, is_tp) over all frames
            std::vector<std::pair<double, bool>> scored;
            for (const auto& f : frames) {
                std::vector<Detection> preds;
                for (const auto& p : f.preds) {
                    if (p.box.cls == cls) preds.push_back(p);
                }
                std::vector<std::uint8_t> tp(preds.size(), 0);
                for (const auto& m : greedy_center_match(preds, f.truth, thr)) tp[m.pred] = 1;
                for (std::size_t i = 0; i < preds.size(); ++i) scored.emplace_back(preds[i].score, tp[i] != 0);
            }
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            std::vector<double> precision, recall;
            std::size_t tps = 0;
            for (std::size_t i = 0; i < scored.size(); ++i) {
                tps += scored[i].second;
                precision.push_back(static_cast<double>(tps) / (i + 1));
                recall.push_back(static_cast<double>(tps) / n_gt);
            }
            // monotone envelope from the right
            for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
            double ap = 0.0;
            for (int k = 0; k <= 100; ++k) {
                const double r = k / 100.0;
                const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
                if (it != recall.end()) ap += precision[static_cast<std::size_t>(it - recall.begin())];
            }
            total += ap / 101.0;
            ++terms;
        }
    }
    return terms ? Metric::of(total / terms) : Metric::undefined();
}

MiouAccumulator::MiouAccumulator(int classes, int ignore_class)
    : classes_(classes), ignore_(ignore_class), inter_(classes, 0), uni_(classes, 0) {}

void MiouAccumulator::add(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("miou: size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], t = truth[i];
        if (p < 0 || p >= classes_ || t < 0 || t >= classes_) throw std::out_of_range("miou: label out of range");
        if (p == t) {
            ++inter_[p];
            ++uni_[p];
        } else {
            ++uni_[p];
            ++uni_[t];
        }
    }
}

MiouResult MiouAccumulator::result() const {
    MiouResult r;
    r.per_class.assign(classes_, Metric::undefined());
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < classes_; ++c) {
        if (c == ignore_ || uni_[c] == 0) continue;
        const double iou = static_cast<double>(inter_[c]) / static_cast<double>(uni_[c]);
        r.per_class[c] = Metric::of(iou);
        sum += iou;
        ++n;
    }
    r.miou = n ? Metric::of(sum / n) : Metric::undefined();
    return r;
}

MiouResult miou(std::span<const int> pred, std::span<const int> truth, int classes, int ignore_class) {
    MiouAccumulator acc(classes, ignore_class);
    acc.add(pred, truth);
    return acc.result();
}

MotaResult mota_lite(std::span<const TrackedFrame> frames, double threshold) {
    MotaResult r;
    std::map<int, int> last_track;  // truth id -> matched track id
    for (const auto& f : frames) {
        if (f.track_ids.size() != f.preds.size()) throw std::invalid_argument("mota_lite: one track id per prediction");
        const auto matches = greedy_center_match(f.preds, f.truth, threshold);
        r.gt += f.truth.size();
        r.fp += f.preds.size() - matches.size();
        r.fn += f.truth.size() - matches.size();
        for (const auto& m : matches) {
            const int gt_id = f.truth[m.truth].id;
            const int tid = f.track_ids[m.pred];
            const auto it = last_track.find(gt_id);
            if (it != last_track.end() && it->second != tid) ++r.id_switches;
            last_track[gt_id] = tid;
        }
    }
    if (r.gt == 0) return r;
    r.mota = Metric::of(1.0 - static_cast<double>(r.fp + r.fn + r.id_switches) / static_cast<double>(r.gt));
    return r;
}

}  // namespace hydra::sim
