#include "hydra/geometry/rig_io.hpp"

#include "hydra/io.hpp"

namespace hydra::geo {

nlohmann::json rig_to_json(const CameraRig& rig) {
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& cam : rig.cameras) {
        std::vector<double> k, t;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) k.push_back(cam.K(r, c));
        }
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) t.push_back(cam.world_to_cam(r, c));
        }
        cams.push_back({{"K", k}, {"T", t}, {"image_size", {cam.height_px, cam.width_px}}});
    }
    return {{"cameras", cams}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
    CameraRig rig;
    for (const auto& jc : j.at("cameras")) {
        const auto k = jc.at("K").get<std::vector<double>>();
        const auto t = jc.at("T").get<std::vector<double>>();
        const auto size = jc.at("image_size").get<std::vector<int>>();
        if (k.size() != 9 || t.size() != 16 || size.size() != 2) {
            throw std::invalid_argument("rig: K needs 9 values, T 16, image_size 2");
        }
        Camera cam;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.K(r, c) = k[r * 3 + c];
        }
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) cam.world_to_cam(r, c) = t[r * 4 + c];
        }
        cam.height_px = size[0];
        cam.width_px = size[1];
        validate(cam);
        rig.cameras.push_back(cam);
    }
    return rig;
}

CameraRig load_rig(const std::filesystem::path& path) {
    return rig_from_json(nlohmann::json::parse(io::read_file(path)));
}

void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
    io::atomic_write(path, rig_to_json(rig).dump(2) + "\n");
}

}  // namespace hydra::geo
