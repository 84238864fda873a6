#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "evk/geom.hpp"

namespace evk {

struct LoadedMesh {
  TriMesh mesh;
  std::size_t dropped_faces = 0;  // repeated-index or zero-area faces
};

/// Reads ASCII OBJ or binary little-endian PLY (chosen by extension, then by
/// header sniffing). Polygons are fan-triangulated.
LoadedMesh load_mesh(const std::filesystem::path& path);
LoadedMesh parse_obj(std::string_view text);
LoadedMesh parse_ply(std::string_view bytes);

void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

/// p' = (p + offset) * scale
struct UnitCubeTransform {
  double scale = 1;
  Vec3 offset;

  Vec3 apply(const Vec3& p) const { return (p + offset) * scale; }
  Vec3 invert(const Vec3& q) const { return q * (1.0 / scale) - offset; }
};

struct NormalizedMesh {
  TriMesh mesh;
  UnitCubeTransform transform;
};

/// Centers the bounding box at the origin and scales uniformly so the longest
/// axis spans [-0.5, 0.5].
NormalizedMesh normalize_unit_cube(const TriMesh& mesh);
UnitCubeTransform unit_cube_transform(const TriMesh& mesh);
TriMesh apply_transform(const TriMesh& mesh, const UnitCubeTransform& transform);

/// Area-weighted uniform surface samples with face normals. Deterministic for
/// a seed and independent of the OpenMP thread count.
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

namespace serial {
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);
}

struct VoxelizeOptions {
  Bounds bounds;               // default [-0.5, 0.5]^3
  bool fill_interior = false;  // also mark cells enclosed by the surface
};

/// Conservative surface voxelization: a cell is occupied iff some triangle
/// touches the closed cell box.
VoxelGrid voxelize(const TriMesh& mesh, int resolution, const VoxelizeOptions& options = {});

/// Closed triangle / axis-aligned box overlap (separating axis test).
bool triangle_box_overlap(const Vec3& box_center, const Vec3& half_size, const Vec3& a, const Vec3& b,
                          const Vec3& c);

/// Closed boundary surface of the occupied cells as a triangle mesh (two
/// triangles per exposed cell face).
TriMesh voxel_surface_mesh(const VoxelGrid& grid);

}  // namespace evk
