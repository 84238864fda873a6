#pragma once

#include <filesystem>
#include <vector>

#include "evk/geom.hpp"

namespace evk {

struct RingSpec {
  int count = 70;
  double elevation_deg = 20.0;
  double radius = 2.5;
  double fov_deg = 50.0;
  int image_size = 256;
};

/// Cameras on a horizontal ring (Y up) at uniform azimuths, all looking at
/// the origin. Azimuth 0 places the camera on +X.
std::vector<View> ring_views(int count, double elevation_deg, double radius, double fov_deg,
                             int image_size);
inline std::vector<View> ring_views(const RingSpec& spec) {
  return ring_views(spec.count, spec.elevation_deg, spec.radius, spec.fov_deg, spec.image_size);
}

/// World-to-camera rotation for a camera at `eye` looking at `target`.
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& world_up = {0, 1, 0});

/// views.json: array of {fx, fy, cx, cy, width, height, R: [9] row-major, t: [3]}.
std::vector<View> read_views_json(const std::filesystem::path& path);
void write_views_json(const std::filesystem::path& path, const std::vector<View>& views);

}  // namespace evk
