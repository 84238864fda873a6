#include "evk/metrics3d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "evk/error.hpp"
#include "evk/mesh.hpp"
#include "evk/reduce.hpp"
#include "evk/rng.hpp"

namespace evk {

KdTree::KdTree(std::span<const Vec3> points, int leaf_size) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw Error(ErrorKind::EmptyCloud, "cannot index an empty cloud");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / std::max(1, leaf_size) + 1);
  build(0, static_cast<std::uint32_t>(points_.size()), std::max(1, leaf_size));
}

int KdTree::build(std::uint32_t begin, std::uint32_t end, int leaf_size) {
  Node n;
  n.begin = begin;
  n.end = end;
  n.lo = n.hi = points_[order_[begin]];
  for (std::uint32_t i = begin; i < end; ++i) {
    const Vec3& p = points_[order_[i]];
    for (int k = 0; k < 3; ++k) {
      n.lo[k] = std::min(n.lo[k], p[k]);
      n.hi[k] = std::max(n.hi[k], p[k]);
    }
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(n);
  if (end - begin <= static_cast<std::uint32_t>(leaf_size)) return id;

  int axis = 0;
  for (int k = 1; k < 3; ++k)
    if (n.hi[k] - n.lo[k] > n.hi[axis] - n.lo[axis]) axis = k;
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const int l = build(begin, mid, leaf_size);
  const int r = build(mid, end, leaf_size);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {

// Lower bound on distance_sq from q to any point in the box. Each axis gap is
// no larger than the corresponding coordinate difference of a contained
// point, and the same evaluation order keeps the bound valid after rounding.
double box_distance_sq(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double g[3];
  for (int k = 0; k < 3; ++k) g[k] = q[k] < lo[k] ? lo[k] - q[k] : (q[k] > hi[k] ? q[k] - hi[k] : 0.0);
  return g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
}

bool better(double d, std::uint32_t i, const KdTree::Hit& best) {
  return d < best.distance_sq || (d == best.distance_sq && i < best.index);
}

}  // namespace

void KdTree::search(int id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[id];
  if (n.left < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t idx = order_[i];
      const double d = distance_sq(q, points_[idx]);
      if (better(d, idx, best)) best = {d, idx};
    }
    return;
  }
  const double dl = box_distance_sq(q, nodes_[n.left].lo, nodes_[n.left].hi);
  const double dr = box_distance_sq(q, nodes_[n.right].lo, nodes_[n.right].hi);
  const int first = dl <= dr ? n.left : n.right;
  const int second = dl <= dr ? n.right : n.left;
  const double d1 = std::min(dl, dr), d2 = std::max(dl, dr);
  // Equal-distance boxes are still visited so that ties resolve by index.
  if (d1 <= best.distance_sq) search(first, q, best);
  if (d2 <= best.distance_sq) search(second, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  Hit best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::uint32_t>::max()};
  search(0, q, best);
  return best;
}

namespace {

void require_nonempty(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty()) throw Error(ErrorKind::EmptyCloud, "point cloud is empty");
}

double mean(std::span<const double> v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

}  // namespace

NearestResult nn_distances(const PointCloud& query, const PointCloud& target) {
  require_nonempty(query, target);
  const KdTree tree(target.points);
  NearestResult r;
  const auto n = static_cast<std::ptrdiff_t>(query.points.size());
  r.distances.resize(query.points.size());
  r.indices.resize(query.points.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto hit = tree.nearest(query.points[i]);
    r.distances[i] = std::sqrt(hit.distance_sq);
    r.indices[i] = hit.index;
  }
  return r;
}

namespace serial {

NearestResult nn_distances(const PointCloud& query, const PointCloud& target) {
  require_nonempty(query, target);
  NearestResult r;
  r.distances.reserve(query.points.size());
  r.indices.reserve(query.points.size());
  for (const Vec3& q : query.points) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t bi = 0;
    for (std::uint32_t j = 0; j < target.points.size(); ++j) {
      const double d = distance_sq(q, target.points[j]);
      if (d < best) {
        best = d;
        bi = j;
      }
    }
    r.distances.push_back(std::sqrt(best));
    r.indices.push_back(bi);
  }
  return r;
}

}  // namespace serial

CloudMatch match_clouds(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, b);
  return {nn_distances(a, b), nn_distances(b, a)};
}

double chamfer(const CloudMatch& m) { return 0.5 * (mean(m.a_to_b.distances) + mean(m.b_to_a.distances)); }

double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(match_clouds(a, b)); }

double chamfer_squared(const CloudMatch& m) {
  auto sq_mean = [](const std::vector<double>& d) {
    std::vector<double> s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s[i] = d[i] * d[i];
    return mean(s);
  };
  return 0.5 * (sq_mean(m.a_to_b.distances) + sq_mean(m.b_to_a.distances));
}

namespace {

double abs_cos(const Vec3& u, const Vec3& v) {
  const double denom = std::sqrt(dot(u, u) * dot(v, v));
  if (!(denom > 0)) return 0.0;
  return std::min(1.0, std::abs(dot(u, v)) / denom);
}

double directed_nc(const PointCloud& from, const PointCloud& to, const NearestResult& nn) {
  std::vector<double> c(from.points.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = abs_cos(from.normals[i], to.normals[nn.indices[i]]);
  return mean(c);
}

}  // namespace

double normal_consistency(const PointCloud& a, const PointCloud& b, const CloudMatch& m) {
  require_nonempty(a, b);
  if (!a.has_normals() || !b.has_normals()) throw Error(ErrorKind::MissingNormals, "normal consistency needs normals");
  return 0.5 * (directed_nc(a, b, m.a_to_b) + directed_nc(b, a, m.b_to_a));
}

double normal_consistency(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, b);
  if (!a.has_normals() || !b.has_normals()) throw Error(ErrorKind::MissingNormals, "normal consistency needs normals");
  return normal_consistency(a, b, match_clouds(a, b));
}

double harmonic_f1(double precision, double recall) {
  if (precision + recall <= 0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

F1Score f1_threshold(const CloudMatch& m, double threshold) {
  if (!(threshold > 0)) throw Error(ErrorKind::InvalidArgument, "threshold must be positive");
  auto frac = [threshold](const std::vector<double>& d) {
    std::size_t hit = 0;
    for (double x : d) hit += x <= threshold;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(d.size());
  };
  F1Score s;
  s.precision = frac(m.a_to_b.distances);
  s.recall = frac(m.b_to_a.distances);
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

F1Score f1_threshold(const PointCloud& a, const PointCloud& b, double threshold) {
  if (!(threshold > 0)) throw Error(ErrorKind::InvalidArgument, "threshold must be positive");
  return f1_threshold(match_clouds(a, b), threshold);
}

Eval3DReport eval_3d(const TriMesh& pred, const TriMesh& gt, std::uint64_t seed, const Eval3DOptions& options) {
  if (options.samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  const UnitCubeTransform tf = unit_cube_transform(gt);
  const PointCloud p = sample_surface(apply_transform(pred, tf), options.samples, derive_seed(seed, 0));
  const PointCloud g = sample_surface(apply_transform(gt, tf), options.samples, derive_seed(seed, 1));
  const CloudMatch m = match_clouds(p, g);
  Eval3DReport r;
  r.cd = chamfer(m);
  r.cd_x1000 = r.cd * 1000.0;
  r.cd_squared = chamfer_squared(m);
  r.nc = normal_consistency(p, g, m);
  const F1Score f = f1_threshold(m, options.threshold);
  r.precision = f.precision;
  r.recall = f.recall;
  r.f1_at_001 = f.f1;
  r.sample_count = options.samples;
  r.seed = seed;
  r.threshold = options.threshold;
  return r;
}

nlohmann::json to_json(const Eval3DReport& r) {
  return {{"cd", r.cd},
          {"cd_x1000", r.cd_x1000},
          {"cd_squared", r.cd_squared},
          {"nc", r.nc},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1_at_001", r.f1_at_001},
          {"threshold", r.threshold},
          {"sample_count", r.sample_count},
          {"seed", r.seed}};
}

}  // namespace evk
