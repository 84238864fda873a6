#pragma once

#include <span>
#include <vector>

#include "evk/geom.hpp"

namespace evk {

struct Projection {
  double u = 0, v = 0;  // pixel coordinates
  double depth = 0;     // camera-frame Z
  bool behind_camera = false;
};

/// Pinhole projection of a world point. Throws ZeroDepth when |Z| < 1e-12.
Projection project_point(const View& view, const Vec3& p);

/// Whether p projects into a set pixel of `mask`. Points behind the camera,
/// at zero depth or outside the image are misses.
bool projects_into(const View& view, const Mask2D& mask, const Vec3& p);

struct VoteConfig {
  double tau = 0.5;  // fraction of views, 0 < tau <= 1
  int n_views = 70;
};

/// Minimum vote count kept by threshold_mask: ceil(tau * N).
int vote_threshold(const VoteConfig& cfg);

/// c(v) = number of views whose mask contains the projection of the center of
/// occupied cell v. Unoccupied cells count 0.
CountGrid vote(const VoxelGrid& domain, std::span<const View> views, std::span<const Mask2D> masks);

/// M = { v : c(v) >= ceil(tau * N) }.
VoxelGrid threshold_mask(const CountGrid& counts, const VoteConfig& cfg);

/// Radius of a sphere, centered on the occupied cells' bounding box, that
/// encloses every occupied cell completely.
double bounding_sphere_radius(const VoxelGrid& mask);

/// Cells whose center lies within `world_radius` of an occupied cell center.
VoxelGrid dilate_ball(const VoxelGrid& mask, double world_radius);

/// Ball dilation by radius_pct percent of the bounding-sphere radius.
VoxelGrid dilate_mask(const VoxelGrid& mask, double radius_pct);

/// |a and b| / |a or b|; 1 when both are empty.
double mask_iou(const VoxelGrid& a, const VoxelGrid& b);

/// Conservative silhouette of the occupied cells: a pixel is set when its
/// square overlaps the projected hull of any occupied cell.
Mask2D render_silhouette(const VoxelGrid& grid, const View& view);

namespace serial {
CountGrid vote(const VoxelGrid& domain, std::span<const View> views, std::span<const Mask2D> masks);
VoxelGrid dilate_ball(const VoxelGrid& mask, double world_radius);
}  // namespace serial

}  // namespace evk
