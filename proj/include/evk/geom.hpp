#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "evk/vec.hpp"

namespace evk {

using Triangle = std::array<std::uint32_t, 3>;

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::optional<std::vector<Vec3>> normals;  // per vertex, unit length

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }

  Vec3 face_normal(std::size_t f) const;  // unit; zero for degenerate faces
  double face_area(std::size_t f) const;
};

/// Throws InvalidArgument when indices are out of range or stored normals are
/// not unit length.
void validate(const TriMesh& mesh);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // same length as points, or empty

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
};

struct Bounds {
  Vec3 min{-0.5, -0.5, -0.5};
  Vec3 max{0.5, 0.5, 0.5};

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
  bool degenerate() const { return !(max.x > min.x && max.y > min.y && max.z > min.z); }

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Pinhole camera: pixel = (fx X/Z + cx, fy Y/Z + cy) with (X,Y,Z) = R p + t.
/// Camera frame: +X right, +Y down, +Z forward; pixel origin at the top-left
/// corner, pixel (i, j) covers [i, i+1) x [j, j+1).
struct View {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  Mat3 rotation;
  Vec3 translation;

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 center() const { return -(rotation.transposed() * translation); }
};

void validate(const View& view);

struct Mask2D {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Mask2D() = default;
  Mask2D(int w, int h, bool value = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

struct CellIndex {
  int x = 0, y = 0, z = 0;
};

/// Cubic lattice of R^3 cells over an axis-aligned box. Linear cell index is
/// (x * R + y) * R + z, i.e. row-major over [R, R, R] with axes (x, y, z).
class VoxelDomain {
 public:
  VoxelDomain() = default;
  VoxelDomain(int resolution, Bounds bounds);

  int resolution() const { return resolution_; }
  const Bounds& bounds() const { return bounds_; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(resolution_) * resolution_ * resolution_;
  }
  Vec3 cell_size() const { return cell_size_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * resolution_ + y) * resolution_ + z;
  }
  CellIndex cell(std::size_t index) const {
    const auto r = static_cast<std::size_t>(resolution_);
    return {static_cast<int>(index / (r * r)), static_cast<int>((index / r) % r),
            static_cast<int>(index % r)};
  }
  Vec3 center(int x, int y, int z) const {
    return {bounds_.min.x + (x + 0.5) * cell_size_.x, bounds_.min.y + (y + 0.5) * cell_size_.y,
            bounds_.min.z + (z + 0.5) * cell_size_.z};
  }
  Vec3 center(std::size_t index) const {
    const auto c = cell(index);
    return center(c.x, c.y, c.z);
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < resolution_ && y < resolution_ && z < resolution_;
  }

  friend bool operator==(const VoxelDomain& a, const VoxelDomain& b) {
    return a.resolution_ == b.resolution_ && a.bounds_ == b.bounds_;
  }

 private:
  int resolution_ = 0;
  Bounds bounds_;
  Vec3 cell_size_;
};

struct VoxelGrid {
  VoxelDomain domain;
  std::vector<std::uint8_t> bits;  // 0 or 1 per cell

  VoxelGrid() = default;
  explicit VoxelGrid(VoxelDomain d, bool value = false)
      : domain(d), bits(d.cell_count(), value ? 1 : 0) {}

  int resolution() const { return domain.resolution(); }
  bool at(std::size_t i) const { return bits[i] != 0; }
  bool at(int x, int y, int z) const { return bits[domain.index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v) { bits[domain.index(x, y, z)] = v ? 1 : 0; }
  std::size_t count() const;
};

struct CountGrid {
  VoxelDomain domain;
  int n_views = 0;
  std::vector<std::uint32_t> counts;

  CountGrid() = default;
  CountGrid(VoxelDomain d, int views) : domain(d), n_views(views), counts(d.cell_count(), 0) {}
};

}  // namespace evk
