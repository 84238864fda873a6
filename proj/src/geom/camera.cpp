#include "evk/camera.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "evk/error.hpp"

namespace evk {

Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
  const Vec3 forward = normalized(target - eye);
  const Vec3 side = cross(forward, world_up);
  if (norm(side) < 1e-12) throw Error(ErrorKind::InvalidArgument, "view direction is parallel to the up vector");
  const Vec3 right = normalized(side);
  const Vec3 down = cross(forward, right);
  return Mat3::from_rows(right, down, forward);
}

std::vector<View> ring_views(int count, double elevation_deg, double radius, double fov_deg, int image_size) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "view count must be >= 1");
  if (!(fov_deg > 0 && fov_deg < 180)) throw Error(ErrorKind::InvalidArgument, "fov must be in (0, 180)");
  if (!(radius > 0)) throw Error(ErrorKind::InvalidArgument, "ring radius must be positive");
  if (image_size < 1) throw Error(ErrorKind::InvalidArgument, "image size must be >= 1");

  constexpr double deg = std::numbers::pi / 180.0;
  const double focal = 0.5 * image_size / std::tan(0.5 * fov_deg * deg);
  const double el = elevation_deg * deg;
  std::vector<View> views;
  views.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double az = 2.0 * std::numbers::pi * k / count;
    const Vec3 eye{radius * std::cos(el) * std::cos(az), radius * std::sin(el), radius * std::cos(el) * std::sin(az)};
    View v;
    v.fx = v.fy = focal;
    v.cx = v.cy = 0.5 * image_size;
    v.width = v.height = image_size;
    v.rotation = look_at_rotation(eye, {0, 0, 0});
    v.translation = -(v.rotation * eye);
    views.push_back(v);
  }
  return views;
}

std::vector<View> read_views_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::ParseError, "views.json must be an array");
  std::vector<View> views;
  try {
    for (const auto& item : doc) {
      View v;
      v.fx = item.at("fx").get<double>();
      v.fy = item.at("fy").get<double>();
      v.cx = item.at("cx").get<double>();
      v.cy = item.at("cy").get<double>();
      v.width = item.at("width").get<int>();
      v.height = item.at("height").get<int>();
      const auto r = item.at("R").get<std::vector<double>>();
      const auto t = item.at("t").get<std::vector<double>>();
      if (r.size() != 9 || t.size() != 3) throw Error(ErrorKind::ParseError, "R needs 9 values and t needs 3");
      for (int i = 0; i < 9; ++i) v.rotation.m[i] = r[i];
      v.translation = {t[0], t[1], t[2]};
      validate(v);
      views.push_back(v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return views;
}

void write_views_json(const std::filesystem::path& path, const std::vector<View>& views) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& v : views) {
    doc.push_back({{"fx", v.fx},
                   {"fy", v.fy},
                   {"cx", v.cx},
                   {"cy", v.cy},
                   {"width", v.width},
                   {"height", v.height},
                   {"R", std::vector<double>(v.rotation.m.begin(), v.rotation.m.end())},
                   {"t", {v.translation.x, v.translation.y, v.translation.z}}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace evk
