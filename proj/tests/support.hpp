#pragma once

#include <doctest.h>

#include <filesystem>
#include <string>

#include "evk/error.hpp"
#include "evk/geom.hpp"
#include "evk/rng.hpp"

// Passes when `expr` throws evk::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                                           \
  do {                                                                                  \
    bool evk_thrown_ = false;                                                           \
    try {                                                                               \
      (void)(expr);                                                                     \
    } catch (const evk::Error& evk_e_) {                                                \
      evk_thrown_ = true;                                                               \
      CHECK_MESSAGE(evk_e_.kind() == (expected_kind), "got: " << evk_e_.what());       \
    }                                                                                   \
    CHECK_MESSAGE(evk_thrown_, "expected " << evk::to_string(expected_kind));          \
  } while (0)

namespace evk::test {

inline TriMesh box_mesh(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  // two triangles per face, outward winding
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

inline TriMesh unit_cube() { return box_mesh({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}); }

inline Vec3 random_point(Rng& rng, double lo = -0.5, double hi = 0.5) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v{normal(rng), normal(rng), normal(rng)};
    if (norm(v) > 1e-6) return normalized(v);
  }
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("evk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Camera with identity rotation at translation t.
inline View simple_view(const Vec3& t, double f, double c, int size) {
  View v;
  v.fx = v.fy = f;
  v.cx = v.cy = c;
  v.width = v.height = size;
  v.translation = t;
  return v;
}

}  // namespace evk::test
