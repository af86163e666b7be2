#pragma once

#include <array>
#include <string_view>

namespace hydra {

/// Object classes first, then the two static occupancy classes. Detection
/// heads use ids 0..3; occupancy uses all six.
enum class SemanticClass : int {
    car = 0,
    truck = 1,
    pedestrian = 2,
    cyclist = 3,
    drivable = 4,
    free = 5,
};

inline constexpr int kObjectClasses = 4;
inline constexpr int kOccClasses = 6;
inline constexpr int kFreeClass = static_cast<int>(SemanticClass::free);
inline constexpr int kDrivableClass = static_cast<int>(SemanticClass::drivable);

inline constexpr std::array<std::string_view, kOccClasses> kClassNames{"car",      "truck", "pedestrian",
                                                                       "cyclist",  "drivable", "free"};

/// Oriented 3D box in the ego frame. (x, y, z) is the box centre; yaw is
/// CCW from +x; length runs along the heading.
struct Box {
    double x = 0.0, y = 0.0, z = 0.0;
    double l = 1.0, w = 1.0, h = 1.0;
    double yaw = 0.0;
    double vx = 0.0, vy = 0.0;
    int cls = 0;
    int id = -1;  // ground-truth identity, -1 when unknown
};

struct Detection {
    Box box;
    double score = 0.0;
};

}  // namespace hydra
