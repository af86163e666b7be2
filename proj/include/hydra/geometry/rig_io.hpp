#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "hydra/geometry/geometry.hpp"

namespace hydra::geo {

/// Rig file layout:
///   {"cameras": [{"K": [9 floats, row-major],
///                 "T": [16 floats, row-major world->camera],
///                 "image_size": [height_px, width_px]}, ...]}
nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

CameraRig load_rig(const std::filesystem::path& path);
void save_rig(const std::filesystem::path& path, const CameraRig& rig);

}  // namespace hydra::geo
