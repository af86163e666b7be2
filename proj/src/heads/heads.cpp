#include "hydra/heads/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

namespace hydra::heads {

using ad::Init;
using ad::ShapeError;

// ---------------------------------------------------------------- occupancy

Tensor unstack_height(const Tensor& bev, std::size_t z) {
    if (bev.rank() != 3) throw ShapeError("unstack_height: expected [nx, ny, Z*C], got " + ad::to_string(bev.shape()));
    if (z == 0 || bev.dim(2) % z != 0) {
        throw ShapeError("unstack_height: " + std::to_string(bev.dim(2)) + " channels do not split into " +
                         std::to_string(z) + " height levels");
    }
    return ad::reshape(bev, {bev.dim(0), bev.dim(1), z, bev.dim(2) / z});
}

Tensor stack_height(const Tensor& volume) {
    if (volume.rank() != 4) throw ShapeError("stack_height: expected [nx, ny, Z, C], got " + ad::to_string(volume.shape()));
    return ad::reshape(volume, {volume.dim(0), volume.dim(1), volume.dim(2) * volume.dim(3)});
}

OccupancyWeights make_occupancy_weights(const OccupancyConfig& config, ad::ParamStore& store,
                                        const std::string& prefix) {
    OccupancyWeights w;
    w.c2h_w = store.create(prefix + "c2h.w", {config.in_channels, config.z * config.channels}, Init::uniform,
                           config.in_channels, std::sqrt(2.0));
    w.c2h_b = store.create(prefix + "c2h.b", {config.z * config.channels}, Init::zeros);
    w.cls_w = store.create(prefix + "cls.w", {config.channels, config.classes}, Init::uniform, config.channels);
    w.cls_b = store.create(prefix + "cls.b", {config.classes}, Init::zeros);
    return w;
}

Tensor channel_to_height(const Tensor& bev, const OccupancyWeights& w, std::size_t z) {
    return unstack_height(ad::relu(ad::linear(bev, w.c2h_w, w.c2h_b)), z);
}

Tensor occupancy_head(const Tensor& volume, const OccupancyWeights& w) {
    if (volume.rank() != 4) throw ShapeError("occupancy_head: expected [nx, ny, Z, C], got " + ad::to_string(volume.shape()));
    return ad::linear(volume, w.cls_w, w.cls_b);
}

std::vector<int> occupancy_argmax(const Tensor& logits) {
    if (logits.rank() == 0) throw ShapeError("occupancy_argmax: scalar input");
    const std::size_t k = logits.shape().back();
    const std::size_t n = logits.numel() / k;
    const auto d = logits.data();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (d[i * k + c] > d[i * k + best]) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

// ---------------------------------------------------------------- centre head

CenterWeights make_center_weights(const CenterConfig& config, ad::ParamStore& store, const std::string& prefix) {
    CenterWeights w;
    w.shared_w = store.create(prefix + "shared.w", {3, 3, config.in_channels, config.hidden}, Init::uniform,
                              9 * config.in_channels, std::sqrt(2.0));
    w.shared_b = store.create(prefix + "shared.b", {config.hidden}, Init::zeros);
    w.heat_w = store.create(prefix + "heat.w", {config.hidden, config.classes}, Init::uniform, config.hidden, 0.1);
    w.heat_b = store.create_constant(prefix + "heat.b", {config.classes}, config.heat_bias);
    w.reg_w = store.create(prefix + "reg.w", {config.hidden, kRegChannels}, Init::uniform, config.hidden);
    w.reg_b = store.create(prefix + "reg.b", {kRegChannels}, Init::zeros);
    return w;
}

CenterOutput center_head(const Tensor& bev, const CenterWeights& w) {
    if (bev.rank() != 3) throw ShapeError("center_head: expected [nx, ny, C], got " + ad::to_string(bev.shape()));
    auto hidden = ad::relu(ad::conv2d(bev, w.shared_w, w.shared_b));
    CenterOutput out;
    out.heat_logits = ad::linear(hidden, w.heat_w, w.heat_b);
    out.heat = ad::sigmoid(out.heat_logits);
    out.reg = ad::linear(hidden, w.reg_w, w.reg_b);
    return out;
}

double gaussian_sigma(const Box& box, double resolution) {
    const double radius = std::max(1.0, 0.5 * std::max(box.l, box.w) / resolution);
    return (2.0 * radius + 1.0) / 6.0;
}

void encode_yaw(double yaw, double& s, double& c) {
    s = std::sin(yaw);
    c = std::cos(yaw);
}

double decode_yaw(double s, double c) { return std::atan2(s, c); }

CenterTargets center_targets(std::span<const Box> boxes, const geo::BevGrid& grid, std::size_t classes) {
    geo::validate(grid);
    CenterTargets t;
    t.nx = grid.nx;
    t.ny = grid.ny;
    t.classes = classes;
    t.heat.assign(t.nx * t.ny * classes, 0.0);
    t.reg.assign(t.nx * t.ny * kRegChannels, 0.0);
    for (const auto& b : boxes) {
        if (b.cls < 0 || static_cast<std::size_t>(b.cls) >= classes) {
            throw std::invalid_argument("center_targets: box class " + std::to_string(b.cls) + " outside [0, " +
                                        std::to_string(classes) + ")");
        }
        const auto cell = grid.cell_of(b.x, b.y);
        if (!cell) continue;
        const auto [ci, cj] = *cell;
        const double sigma = gaussian_sigma(b, grid.resolution);
        const int reach = static_cast<int>(std::ceil(3.0 * sigma));
        for (int i = std::max(0, ci - reach); i <= std::min(grid.nx - 1, ci + reach); ++i)
            for (int j = std::max(0, cj - reach); j <= std::min(grid.ny - 1, cj + reach); ++j) {
                const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
                const double g = std::exp(-d2 / (2.0 * sigma * sigma));
                double& dst = t.heat[static_cast<std::size_t>(grid.flat(i, j)) * classes + b.cls];
                dst = std::max(dst, g);
            }
        const auto flat = static_cast<std::size_t>(grid.flat(ci, cj));
        const auto centre = grid.cell_center(ci, cj);
        double* r = t.reg.data() + flat * kRegChannels;
        r[kRegDx] = (b.x - centre.x()) / grid.resolution;
        r[kRegDy] = (b.y - centre.y()) / grid.resolution;
        r[kRegZ] = b.z;
        r[kRegLogL] = std::log(b.l);
        r[kRegLogW] = std::log(b.w);
        r[kRegLogH] = std::log(b.h);
        encode_yaw(b.yaw, r[kRegSin], r[kRegCos]);
        r[kRegVx] = b.vx;
        r[kRegVy] = b.vy;
        t.cells.push_back(static_cast<std::int64_t>(flat));
    }
    return t;
}

std::vector<Detection> decode_boxes(const Tensor& heat, const Tensor& reg, const geo::BevGrid& grid,
                                    double score_thresh, std::size_t max_dets) {
    if (heat.rank() != 3 || reg.rank() != 3 || heat.dim(0) != static_cast<std::size_t>(grid.nx) ||
        heat.dim(1) != static_cast<std::size_t>(grid.ny) || reg.dim(0) != heat.dim(0) || reg.dim(1) != heat.dim(1) ||
        reg.dim(2) != kRegChannels) {
        throw ShapeError("decode_boxes: heat " + ad::to_string(heat.shape()) + " / reg " + ad::to_string(reg.shape()) +
                         " do not match the grid");
    }
    const std::size_t k = heat.dim(2);
    const auto h = heat.data();
    const auto rg = reg.data();
    struct Peak {
        double score;
        std::size_t flat;
        std::size_t cls;
    };
    std::vector<Peak> peaks;
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j) {
            const auto flat = static_cast<std::size_t>(grid.flat(i, j));
            for (std::size_t c = 0; c < k; ++c) {
                const double s = h[flat * k + c];
                if (s < score_thresh) continue;
                bool keep = true;
                for (int di = -1; di <= 1 && keep; ++di)
                    for (int dj = -1; dj <= 1 && keep; ++dj) {
                        if (di == 0 && dj == 0) continue;
                        const int ni = i + di, nj = j + dj;
                        if (ni < 0 || nj < 0 || ni >= grid.nx || nj >= grid.ny) continue;
                        const auto nflat = static_cast<std::size_t>(grid.flat(ni, nj));
                        const double ns = h[nflat * k + c];
                        keep = nflat < flat ? s > ns : s >= ns;
                    }
                if (keep) peaks.push_back({s, flat, c});
            }
        }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
    if (peaks.size() > max_dets) peaks.resize(max_dets);

    std::vector<Detection> dets;
    dets.reserve(peaks.size());
    for (const auto& p : peaks) {
        const int i = static_cast<int>(p.flat) / grid.ny, j = static_cast<int>(p.flat) % grid.ny;
        const auto centre = grid.cell_center(i, j);
        const double* r = rg.data() + p.flat * kRegChannels;
        Detection d;
        d.score = p.score;
        d.box.cls = static_cast<int>(p.cls);
        d.box.x = centre.x() + r[kRegDx] * grid.resolution;
        d.box.y = centre.y() + r[kRegDy] * grid.resolution;
        d.box.z = r[kRegZ];
        d.box.l = std::exp(r[kRegLogL]);
        d.box.w = std::exp(r[kRegLogW]);
        d.box.h = std::exp(r[kRegLogH]);
        d.box.yaw = decode_yaw(r[kRegSin], r[kRegCos]);
        d.box.vx = r[kRegVx];
        d.box.vy = r[kRegVy];
        dets.push_back(d);
    }
    return dets;
}

// ---------------------------------------------------------------- losses

Tensor depth_ce(const Tensor& logits, std::span<const double> targets, std::span<const std::uint8_t> valid) {
    if (logits.rank() != 2) throw ShapeError("depth_ce: expected [P, D] logits, got " + ad::to_string(logits.shape()));
    const std::size_t p = logits.dim(0), d = logits.dim(1);
    if (targets.size() != p * d || valid.size() != p) {
        throw ShapeError("depth_ce: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(valid.size()) + " masks for logits " + ad::to_string(logits.shape()));
    }
    std::vector<std::int64_t> rows;
    std::vector<double> t;
    for (std::size_t i = 0; i < p; ++i) {
        if (!valid[i]) continue;
        rows.push_back(static_cast<std::int64_t>(i));
        t.insert(t.end(), targets.begin() + i * d, targets.begin() + (i + 1) * d);
    }
    if (rows.empty()) return ad::scale(ad::sum(logits), 0.0);
    const std::size_t n = rows.size();
    auto lp = ad::log_softmax(ad::gather_rows(logits, rows), 1);
    return ad::scale(ad::sum(ad::mul(lp, Tensor::from({n, d}, std::move(t)))), -1.0 / static_cast<double>(n));
}

Tensor occ_ce(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights) {
    if (logits.rank() == 0) throw ShapeError("occ_ce: scalar logits");
    const std::size_t k = logits.shape().back();
    const std::size_t n = logits.numel() / k;
    if (labels.size() != n) {
        throw ShapeError("occ_ce: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " voxels");
    }
    if (!class_weights.empty() && class_weights.size() != k) throw ShapeError("occ_ce: class weight count mismatch");
    std::vector<double> pick(n * k, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw std::invalid_argument("occ_ce: label " + std::to_string(labels[i]) + " outside [0, " +
                                        std::to_string(k) + ")");
        }
        const double wgt = class_weights.empty() ? 1.0 : class_weights[labels[i]];
        pick[i * k + labels[i]] = wgt;
        total += wgt;
    }
    auto lp = ad::log_softmax(ad::reshape(logits, {n, k}), 1);
    if (total <= 0.0) return ad::scale(ad::sum(lp), 0.0);
    return ad::scale(ad::sum(ad::mul(lp, Tensor::from({n, k}, std::move(pick)))), -1.0 / total);
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor focal_loss(const Tensor& logits, std::span<const double> targets, double alpha, double beta) {
    if (targets.size() != logits.numel()) {
        throw ShapeError("focal_loss: " + std::to_string(targets.size()) + " targets for logits " +
                         ad::to_string(logits.shape()));
    }
    const auto x = logits.data();
    auto t = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
    std::size_t npos = 0;
    for (double v : *t) npos += v >= 1.0;
    const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(npos, 1));

    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = sigmoid(x[i]);
        if ((*t)[i] >= 1.0) {
            total += std::pow(1.0 - p, alpha) * softplus(-x[i]);
        } else {
            total += std::pow(1.0 - (*t)[i], beta) * std::pow(p, alpha) * softplus(x[i]);
        }
    }
    return ad::make_result("focal_loss", {}, {total * norm}, {logits},
                           [logits, t, alpha, beta, norm](std::span<const double> g) {
                               double* gx = ad::grad_buffer(logits);
                               const auto xv = logits.data();
                               for (std::size_t i = 0; i < xv.size(); ++i) {
                                   const double p = sigmoid(xv[i]);
                                   double d;
                                   if ((*t)[i] >= 1.0) {
                                       const double q = std::pow(1.0 - p, alpha);
                                       d = -alpha * p * q * softplus(-xv[i]) - q * (1.0 - p);
                                   } else {
                                       const double w = std::pow(1.0 - (*t)[i], beta);
                                       const double pa = std::pow(p, alpha);
                                       d = w * (alpha * pa * (1.0 - p) * softplus(xv[i]) + pa * p);
                                   }
                                   gx[i] += g[0] * norm * d;
                               }
                           });
}

Tensor box_l1(const Tensor& reg, std::span<const double> targets, std::span<const std::int64_t> cells) {
    if (reg.rank() != 3) throw ShapeError("box_l1: expected [nx, ny, R], got " + ad::to_string(reg.shape()));
    const std::size_t n_cells = reg.dim(0) * reg.dim(1), r = reg.dim(2);
    if (targets.size() != n_cells * r) throw ShapeError("box_l1: target map size mismatch");
    if (cells.empty()) return ad::scale(ad::sum(reg), 0.0);
    std::vector<double> t;
    for (auto c : cells) t.insert(t.end(), targets.begin() + c * r, targets.begin() + (c + 1) * r);
    auto picked = ad::gather_rows(ad::reshape(reg, {n_cells, r}), cells);
    const double n = static_cast<double>(cells.size() * r);
    return ad::scale(ad::sum(ad::abs(ad::sub(picked, Tensor::from({cells.size(), r}, std::move(t))))), 1.0 / n);
}

// ---------------------------------------------------------------- tracking

TrackStep greedy_track(const std::vector<Track>& tracks, const std::vector<Detection>& detections, double dt,
                       const TrackerConfig& config, int& next_id) {
    if (!(dt > 0.0)) throw std::invalid_argument("greedy_track: dt must be positive");
    std::vector<std::pair<double, double>> predicted(tracks.size());
    for (std::size_t k = 0; k < tracks.size(); ++k) {
        const auto& b = tracks[k].last.box;
        predicted[k] = {b.x + b.vx * dt, b.y + b.vy * dt};
    }
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

    std::vector<int> claimed_by(tracks.size(), -1);
    TrackStep step;
    step.assignments.resize(detections.size());
    std::vector<Track> spawned;
    for (std::size_t di : order) {
        const auto& det = detections[di];
        if (det.box.cls < 0 || det.box.cls >= kObjectClasses) {
            throw std::invalid_argument("greedy_track: detection class " + std::to_string(det.box.cls));
        }
        const double radius = config.radius[det.box.cls];
        std::size_t best = tracks.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < tracks.size(); ++k) {
            if (claimed_by[k] >= 0 || tracks[k].last.box.cls != det.box.cls) continue;
            const double d = std::hypot(det.box.x - predicted[k].first, det.box.y - predicted[k].second);
            if (d > radius) continue;
            if (d < best_d || (d == best_d && tracks[k].id < tracks[best].id)) {
                best = k;
                best_d = d;
            }
        }
        if (best < tracks.size()) {
            claimed_by[best] = static_cast<int>(di);
            step.assignments[di] = {di, tracks[best].id, false};
        } else {
            Track t;
            t.id = next_id++;
            t.last = det;
            spawned.push_back(t);
            step.assignments[di] = {di, t.id, true};
        }
    }
    for (std::size_t k = 0; k < tracks.size(); ++k) {
        Track t = tracks[k];
        if (claimed_by[k] >= 0) {
            t.last = detections[claimed_by[k]];
            t.age = 0;
            ++t.hits;
        } else {
            ++t.age;
            if (t.age > config.max_age) continue;
            // coast on the stored velocity
            t.last.box.x = predicted[k].first;
            t.last.box.y = predicted[k].second;
        }
        step.tracks.push_back(t);
    }
    step.tracks.insert(step.tracks.end(), spawned.begin(), spawned.end());
    return step;
}

std::vector<Assignment> Tracker::step(const std::vector<Detection>& detections, double dt) {
    auto s = greedy_track(tracks_, detections, dt, config_, next_id_);
    tracks_ = std::move(s.tracks);
    return std::move(s.assignments);
}

std::string frame_json_line(int frame, const std::vector<Detection>& detections,
                            const std::vector<Assignment>& assignments) {
    nlohmann::json j;
    j["frame"] = frame;
    j["detections"] = nlohmann::json::array();
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const auto& d = detections[i];
        nlohmann::json o;
        o["track_id"] = i < assignments.size() ? assignments[i].track_id : -1;
        o["class"] = std::string(kClassNames[d.box.cls]);
        o["score"] = d.score;
        o["x"] = d.box.x;
        o["y"] = d.box.y;
        o["z"] = d.box.z;
        o["l"] = d.box.l;
        o["w"] = d.box.w;
        o["h"] = d.box.h;
        o["yaw"] = d.box.yaw;
        o["vx"] = d.box.vx;
        o["vy"] = d.box.vy;
        j["detections"].push_back(o);
    }
    return j.dump();
}

}  // namespace hydra::heads
