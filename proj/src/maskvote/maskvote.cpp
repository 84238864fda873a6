#include "evk/maskvote.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "evk/error.hpp"

namespace evk {

Projection project_point(const View& view, const Vec3& p) {
  const Vec3 c = view.to_camera(p);
  if (std::abs(c.z) < 1e-12) throw Error(ErrorKind::ZeroDepth, "point projects at zero depth");
  return {view.fx * c.x / c.z + view.cx, view.fy * c.y / c.z + view.cy, c.z, c.z <= 0};
}

bool projects_into(const View& view, const Mask2D& mask, const Vec3& p) {
  const Vec3 c = view.to_camera(p);
  if (!(c.z >= 1e-12)) return false;
  const double u = view.fx * c.x / c.z + view.cx;
  const double v = view.fy * c.y / c.z + view.cy;
  if (!(u >= 0 && v >= 0 && u < mask.width && v < mask.height)) return false;
  return mask.at(static_cast<int>(u), static_cast<int>(v));
}

int vote_threshold(const VoteConfig& cfg) {
  if (!(cfg.tau > 0 && cfg.tau <= 1)) throw Error(ErrorKind::InvalidArgument, "tau must be in (0, 1]");
  if (cfg.n_views < 1) throw Error(ErrorKind::InvalidArgument, "n_views must be >= 1");
  // tau*N can land a rounding error above an integer (0.3 * 10); snap those down.
  const double scaled = cfg.tau * cfg.n_views;
  return std::max(1, static_cast<int>(std::ceil(scaled - 1e-9)));
}

namespace {

void check_inputs(std::span<const View> views, std::span<const Mask2D> masks) {
  if (views.size() != masks.size())
    throw Error(ErrorKind::SizeMismatch, std::to_string(views.size()) + " views but " +
                                             std::to_string(masks.size()) + " masks");
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].width != masks[i].width || views[i].height != masks[i].height)
      throw Error(ErrorKind::SizeMismatch, "mask " + std::to_string(i) + " does not match its view size");
    if (masks[i].bits.size() != static_cast<std::size_t>(masks[i].width) * masks[i].height)
      throw Error(ErrorKind::SizeMismatch, "mask " + std::to_string(i) + " bit count mismatch");
  }
}

struct Occupied {
  std::vector<std::size_t> index;
  std::vector<Vec3> center;
};

Occupied occupied_cells(const VoxelGrid& grid) {
  Occupied occ;
  for (std::size_t i = 0; i < grid.bits.size(); ++i)
    if (grid.bits[i]) {
      occ.index.push_back(i);
      occ.center.push_back(grid.domain.center(i));
    }
  return occ;
}

void vote_view(const View& view, const Mask2D& mask, const Occupied& occ, std::vector<std::uint32_t>& counts) {
  for (std::size_t k = 0; k < occ.index.size(); ++k)
    if (projects_into(view, mask, occ.center[k])) ++counts[occ.index[k]];
}

std::vector<std::array<int, 3>> ball_stencil(const Vec3& cs, double radius) {
  std::vector<std::array<int, 3>> offsets;
  const double r2 = radius * radius * (1.0 + 1e-12);
  const int ex = static_cast<int>(std::floor(radius / cs.x)), ey = static_cast<int>(std::floor(radius / cs.y)),
            ez = static_cast<int>(std::floor(radius / cs.z));
  for (int dx = -ex; dx <= ex; ++dx)
    for (int dy = -ey; dy <= ey; ++dy)
      for (int dz = -ez; dz <= ez; ++dz) {
        const double d2 = (dx * cs.x) * (dx * cs.x) + (dy * cs.y) * (dy * cs.y) + (dz * cs.z) * (dz * cs.z);
        if (d2 <= r2) offsets.push_back({dx, dy, dz});
      }
  return offsets;
}

void check_radius(double world_radius) {
  if (!(world_radius >= 0) || !std::isfinite(world_radius))
    throw Error(ErrorKind::InvalidArgument, "dilation radius must be finite and >= 0");
}

}  // namespace

CountGrid vote(const VoxelGrid& domain, std::span<const View> views, std::span<const Mask2D> masks) {
  check_inputs(views, masks);
  CountGrid out(domain.domain, static_cast<int>(views.size()));
  const auto occ = occupied_cells(domain);
  const auto n_views = static_cast<long>(views.size());

#pragma omp parallel
  {
    std::vector<std::uint32_t> local(out.counts.size(), 0);
#pragma omp for schedule(dynamic, 1) nowait
    for (long i = 0; i < n_views; ++i) vote_view(views[i], masks[i], occ, local);
#pragma omp critical(evk_vote_join)
    for (std::size_t k : occ.index) out.counts[k] += local[k];
  }
  return out;
}

CountGrid serial::vote(const VoxelGrid& domain, std::span<const View> views, std::span<const Mask2D> masks) {
  check_inputs(views, masks);
  CountGrid out(domain.domain, static_cast<int>(views.size()));
  const auto occ = occupied_cells(domain);
  for (std::size_t i = 0; i < views.size(); ++i) vote_view(views[i], masks[i], occ, out.counts);
  return out;
}

VoxelGrid threshold_mask(const CountGrid& counts, const VoteConfig& cfg) {
  const int need = vote_threshold(cfg);
  if (counts.n_views != cfg.n_views)
    throw Error(ErrorKind::InvalidArgument, "counts were produced with " + std::to_string(counts.n_views) +
                                                " views, config says " + std::to_string(cfg.n_views));
  VoxelGrid mask(counts.domain);
  for (std::size_t i = 0; i < counts.counts.size(); ++i)
    mask.bits[i] = counts.counts[i] >= static_cast<std::uint32_t>(need) ? 1 : 0;
  return mask;
}

double bounding_sphere_radius(const VoxelGrid& mask) {
  const auto& dom = mask.domain;
  const Vec3 half = dom.cell_size() * 0.5;
  Vec3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
  bool any = false;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    any = true;
    const Vec3 c = dom.center(i);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a] - half[a]);
      hi[a] = std::max(hi[a], c[a] + half[a]);
    }
  }
  if (!any) throw Error(ErrorKind::EmptyMask, "mask has no occupied cells");
  const Vec3 center = (lo + hi) * 0.5;
  double r2 = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    const Vec3 c = dom.center(i);
    Vec3 far;
    for (int a = 0; a < 3; ++a) far[a] = std::abs(c[a] - center[a]) + half[a];
    r2 = std::max(r2, dot(far, far));
  }
  return std::sqrt(r2);
}

VoxelGrid dilate_ball(const VoxelGrid& mask, double world_radius) {
  check_radius(world_radius);
  const auto& dom = mask.domain;
  const auto stencil = ball_stencil(dom.cell_size(), world_radius);
  const int r = dom.resolution();
  VoxelGrid out = mask;
  if (stencil.size() <= 1) return out;

  // The occupied cell nearest to any empty cell has an empty 6-neighbor:
  // from an interior cell, one step toward the target is occupied and
  // strictly closer. Scattering from surface cells alone is therefore exact.
  static constexpr int kNbr[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::vector<std::array<int, 2>>> surface(r);  // per x plane: (y, z)
  for (int x = 0; x < r; ++x)
    for (int y = 0; y < r; ++y)
      for (int z = 0; z < r; ++z) {
        if (!mask.at(x, y, z)) continue;
        for (const auto& n : kNbr)
          if (dom.contains(x + n[0], y + n[1], z + n[2]) && !mask.at(x + n[0], y + n[1], z + n[2])) {
            surface[x].push_back({y, z});
            break;
          }
      }
  int ex = 0;
  for (const auto& o : stencil) ex = std::max(ex, o[0]);
  std::vector<std::vector<std::array<int, 2>>> by_dx(2 * ex + 1);  // (dy, dz) per dx
  for (const auto& o : stencil) by_dx[o[0] + ex].push_back({o[1], o[2]});

  // Each iteration owns one output plane, so writes never collide.
#pragma omp parallel for schedule(dynamic, 1)
  for (int x = 0; x < r; ++x)
    for (int dx = -ex; dx <= ex; ++dx) {
      const int sx = x - dx;
      if (sx < 0 || sx >= r) continue;
      for (const auto& c : surface[sx])
        for (const auto& o : by_dx[dx + ex]) {
          const int y = c[0] + o[0], z = c[1] + o[1];
          if (y >= 0 && y < r && z >= 0 && z < r) out.bits[dom.index(x, y, z)] = 1;
        }
    }
  return out;
}

VoxelGrid serial::dilate_ball(const VoxelGrid& mask, double world_radius) {
  check_radius(world_radius);
  const auto& dom = mask.domain;
  const auto stencil = ball_stencil(dom.cell_size(), world_radius);
  VoxelGrid out(dom);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    const auto c = dom.cell(i);
    for (const auto& o : stencil) {
      const int x = c.x + o[0], y = c.y + o[1], z = c.z + o[2];
      if (dom.contains(x, y, z)) out.set(x, y, z, true);
    }
  }
  return out;
}

VoxelGrid dilate_mask(const VoxelGrid& mask, double radius_pct) {
  if (!(radius_pct >= 0) || !std::isfinite(radius_pct))
    throw Error(ErrorKind::InvalidArgument, "radius_pct must be finite and >= 0");
  const double bsr = bounding_sphere_radius(mask);
  if (radius_pct == 0) return mask;
  return dilate_ball(mask, radius_pct / 100.0 * bsr);
}

double mask_iou(const VoxelGrid& a, const VoxelGrid& b) {
  if (!(a.domain == b.domain) || a.bits.size() != b.bits.size())
    throw Error(ErrorKind::DomainMismatch, "masks have different resolution or bounds");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct Pt2 {
  double x, y;
};

double cross2(const Pt2& o, const Pt2& a, const Pt2& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Andrew's monotone chain; counter-clockwise, no repeated end point.
std::vector<Pt2> convex_hull(std::vector<Pt2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pt2& a, const Pt2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<Pt2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Closed overlap test between a convex polygon and the unit pixel square at
// (px, py), by separating axes (square axes plus polygon edge normals).
bool pixel_overlaps(const std::vector<Pt2>& hull, double px, double py) {
  constexpr double eps = 1e-9;
  const std::array<Pt2, 4> sq{Pt2{px, py}, Pt2{px + 1, py}, Pt2{px + 1, py + 1}, Pt2{px, py + 1}};
  auto separated = [&](double ax, double ay) {
    double pmin = INFINITY, pmax = -INFINITY, smin = INFINITY, smax = -INFINITY;
    for (const auto& p : hull) {
      const double d = p.x * ax + p.y * ay;
      pmin = std::min(pmin, d);
      pmax = std::max(pmax, d);
    }
    for (const auto& p : sq) {
      const double d = p.x * ax + p.y * ay;
      smin = std::min(smin, d);
      smax = std::max(smax, d);
    }
    const double tol = eps * (std::abs(ax) + std::abs(ay)) * (1.0 + std::abs(px) + std::abs(py));
    return pmax < smin - tol || smax < pmin - tol;
  };
  if (separated(1, 0) || separated(0, 1)) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    if (separated(-(b.y - a.y), b.x - a.x)) return false;
  }
  return true;
}

}  // namespace

Mask2D render_silhouette(const VoxelGrid& grid, const View& view) {
  Mask2D mask(view.width, view.height);
  const auto& dom = grid.domain;
  const Vec3 half = dom.cell_size() * 0.5;
  for (std::size_t i = 0; i < grid.bits.size(); ++i) {
    if (!grid.bits[i]) continue;
    const Vec3 c = dom.center(i);
    std::vector<Pt2> pts;
    pts.reserve(8);
    for (int k = 0; k < 8; ++k) {
      const Vec3 corner{c.x + ((k & 1) ? half.x : -half.x), c.y + ((k & 2) ? half.y : -half.y),
                        c.z + ((k & 4) ? half.z : -half.z)};
      const Vec3 cam = view.to_camera(corner);
      if (!(cam.z > 1e-9)) throw Error(ErrorKind::InvalidArgument, "occupied cell crosses the camera plane");
      pts.push_back({view.fx * cam.x / cam.z + view.cx, view.fy * cam.y / cam.z + view.cy});
    }
    const auto hull = convex_hull(std::move(pts));
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& p : hull) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(xmin)) - 1);
    const int x1 = std::min(view.width - 1, static_cast<int>(std::floor(xmax)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(ymin)) - 1);
    const int y1 = std::min(view.height - 1, static_cast<int>(std::floor(ymax)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (!mask.at(x, y) && pixel_overlaps(hull, x, y)) mask.set(x, y, true);
  }
  return mask;
}

}  // namespace evk
