#include "hydra/model/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <variant>

#include "hydra/io.hpp"

namespace hydra::model {

namespace {

using Member = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*, std::uint64_t RunConfig::*>;

struct Field {
    const char* key;
    Member member;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        {"cameras", &RunConfig::cameras},
        {"feat_h", &RunConfig::feat_h},
        {"feat_w", &RunConfig::feat_w},
        {"downsample", &RunConfig::downsample},
        {"image_pool", &RunConfig::image_pool},
        {"depth_bins", &RunConfig::depth_bins},
        {"d_min", &RunConfig::d_min},
        {"d_step", &RunConfig::d_step},
        {"grid_n", &RunConfig::grid_n},
        {"grid_res", &RunConfig::grid_res},
        {"nz", &RunConfig::nz},
        {"channels", &RunConfig::channels},
        {"radar_channels", &RunConfig::radar_channels},
        {"heads", &RunConfig::heads},
        {"rdc_points", &RunConfig::rdc_points},
        {"occ_channels", &RunConfig::occ_channels},
        {"frames", &RunConfig::frames},
        {"dt", &RunConfig::dt},
        {"min_boxes", &RunConfig::min_boxes},
        {"max_boxes", &RunConfig::max_boxes},
        {"radar_noise", &RunConfig::radar_noise},
        {"radar_points", &RunConfig::radar_points},
        {"steps", &RunConfig::steps},
        {"lr", &RunConfig::lr},
        {"seed", &RunConfig::seed},
        {"batch", &RunConfig::batch},
        {"train_split", &RunConfig::train_split},
        {"w_depth", &RunConfig::w_depth},
        {"w_occ", &RunConfig::w_occ},
        {"w_heat", &RunConfig::w_heat},
        {"w_box", &RunConfig::w_box},
        {"score_thresh", &RunConfig::score_thresh},
        {"max_dets", &RunConfig::max_dets},
        {"use_hat", &RunConfig::use_hat},
        {"use_rdc", &RunConfig::use_rdc},
        {"use_radar_bev", &RunConfig::use_radar_bev},
        {"use_depth_supervision", &RunConfig::use_depth_supervision},
        {"use_history", &RunConfig::use_history},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto r = std::from_chars(value.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) {
        throw ConfigError("config: bad value '" + value + "' for " + key);
    }
    return out;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key != f.key) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(config.*member)>;
                if constexpr (std::is_same_v<T, bool>) {
                    if (value == "1" || value == "true") {
                        config.*member = true;
                    } else if (value == "0" || value == "false") {
                        config.*member = false;
                    } else {
                        throw ConfigError("config: " + key + " expects 0/1/true/false, got '" + value + "'");
                    }
                } else {
                    config.*member = parse_number<T>(key, value);
                }
            },
            f.member);
        return;
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.validate();
    return base;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

std::string serialize_config(const RunConfig& config) {
    std::ostringstream os;
    for (const auto& f : fields()) {
        os << f.key << " = ";
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(config.*member)>;
                if constexpr (std::is_same_v<T, double>) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.17g", config.*member);
                    os << buf;
                } else if constexpr (std::is_same_v<T, bool>) {
                    os << (config.*member ? 1 : 0);
                } else {
                    os << config.*member;
                }
            },
            f.member);
        os << "\n";
    }
    return os.str();
}

void RunConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("config: ") + what);
    };
    require(cameras >= 1, "cameras must be >= 1");
    require(feat_h > 0 && feat_w > 0 && downsample > 0, "feature dims must be positive");
    require(image_pool > 0 && downsample % image_pool == 0, "image_pool must divide downsample");
    require(depth_bins >= 2 && d_min > 0 && d_step > 0, "bad depth binning");
    require(grid_n > 0 && grid_res > 0, "bad grid");
    require(nz >= 1, "nz must be >= 1");
    require(channels > 0 && heads > 0 && channels % heads == 0, "channels must be a positive multiple of heads");
    require(radar_channels > 0 && rdc_points > 0 && occ_channels > 0, "channel counts must be positive");
    require(frames >= 1 && dt > 0, "frames >= 1 and dt > 0");
    require(min_boxes >= 0 && max_boxes >= min_boxes, "bad box count range");
    require(radar_points >= 0, "radar_points must be >= 0");
    require(steps >= 0 && lr >= 0 && batch >= 1, "bad training schedule");
    require(train_split > 0 && train_split <= 1, "train_split must be in (0, 1]");
    require(score_thresh >= 0 && score_thresh <= 1 && max_dets >= 0, "bad decoding thresholds");
}

geo::FrustumSpec RunConfig::frustum() const {
    geo::FrustumSpec s;
    s.feat_h = feat_h;
    s.feat_w = feat_w;
    s.depth_bins = depth_bins;
    s.d_min = d_min;
    s.d_step = d_step;
    s.downsample = downsample;
    return s;
}

geo::BevGrid RunConfig::grid() const {
    geo::BevGrid g;
    g.nx = grid_n;
    g.ny = grid_n;
    g.resolution = grid_res;
    g.origin_x = 0.0;
    g.origin_y = -0.5 * grid_n * grid_res;
    return g;
}

sim::OccGrid RunConfig::occ_grid() const {
    sim::OccGrid o;
    o.bev = grid();
    o.nz = nz;
    o.dz = grid_res;
    o.z_min = -grid_res;
    return o;
}

sim::SceneConfig RunConfig::scene_config() const {
    sim::SceneConfig s;
    s.frames = frames;
    s.dt = dt;
    s.min_boxes = min_boxes;
    s.max_boxes = max_boxes;
    s.rig.cameras = cameras;
    s.spec = frustum();
    return s;
}

sim::RadarNoise RunConfig::noise() const {
    sim::RadarNoise n = radar_noise ? sim::RadarNoise{} : sim::RadarNoise::noiseless();
    n.points_per_box = radar_points;
    return n;
}

}  // namespace hydra::model
