#include "evk/geom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evk/error.hpp"

namespace evk {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyMesh: return "EmptyMesh";
    case ErrorKind::DegenerateExtent: return "DegenerateExtent";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::DimOverflow: return "DimOverflow";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ZeroDepth: return "ZeroDepth";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::DomainMismatch: return "DomainMismatch";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::DenoiserFailure: return "DenoiserFailure";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::MissingNormals: return "MissingNormals";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::EmbedderFailure: return "EmbedderFailure";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::PoolTooSmall: return "PoolTooSmall";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::StageFailure: return "StageFailure";
    case ErrorKind::NoReports: return "NoReports";
  }
  return "Unknown";
}

Vec3 TriMesh::face_normal(std::size_t f) const {
  const auto& t = triangles[f];
  return normalized(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
}

double TriMesh::face_area(std::size_t f) const {
  const auto& t = triangles[f];
  return 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
}

void validate(const TriMesh& mesh) {
  const auto n = mesh.vertices.size();
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= n) throw Error(ErrorKind::InvalidArgument, "triangle index " + std::to_string(i) + " out of range");
  if (mesh.normals) {
    if (mesh.normals->size() != n) throw Error(ErrorKind::InvalidArgument, "normal count differs from vertex count");
    for (const auto& nn : *mesh.normals)
      if (std::abs(norm(nn) - 1.0) > 1e-6) throw Error(ErrorKind::InvalidArgument, "stored normal is not unit length");
  }
}

void validate(const View& view) {
  if (!(view.fx > 0 && view.fy > 0)) throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  if (view.width < 1 || view.height < 1) throw Error(ErrorKind::InvalidArgument, "image size must be >= 1");
  const Mat3 rtr = view.rotation.transposed() * view.rotation;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(rtr(r, c) - (r == c ? 1.0 : 0.0)) > 1e-9)
        throw Error(ErrorKind::InvalidArgument, "rotation is not orthonormal");
}

std::size_t Mask2D::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

VoxelDomain::VoxelDomain(int resolution, Bounds bounds) : resolution_(resolution), bounds_(bounds) {
  if (resolution < 1) throw Error(ErrorKind::InvalidArgument, "voxel resolution must be >= 1");
  if (bounds.degenerate()) throw Error(ErrorKind::InvalidArgument, "voxel bounds are degenerate");
  cell_size_ = bounds.extent() * (1.0 / resolution);
}

std::size_t VoxelGrid::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

}  // namespace evk
