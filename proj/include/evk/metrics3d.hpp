#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "evk/geom.hpp"

namespace evk {

/// Exact nearest-neighbor index. Distances are computed with distance_sq, so
/// results match a brute-force scan bitwise; ties go to the lower index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, int leaf_size = 8);

  struct Hit {
    double distance_sq;
    std::uint32_t index;
  };
  Hit nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
  };
  int build(std::uint32_t begin, std::uint32_t end, int leaf_size);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

struct NearestResult {
  std::vector<double> distances;
  std::vector<std::uint32_t> indices;
};

/// Closest target point for every query point. Throws EmptyCloud.
NearestResult nn_distances(const PointCloud& query, const PointCloud& target);

/// Both directions of a nearest-neighbor match.
struct CloudMatch {
  NearestResult a_to_b, b_to_a;
};
CloudMatch match_clouds(const PointCloud& a, const PointCloud& b);

/// 0.5 * (mean d(a->b) + mean d(b->a)), unsquared.
double chamfer(const PointCloud& a, const PointCloud& b);
double chamfer(const CloudMatch& m);
/// Same with squared distances.
double chamfer_squared(const CloudMatch& m);

/// Mean absolute cosine between each normal and its nearest neighbor's,
/// symmetrized. Throws MissingNormals.
double normal_consistency(const PointCloud& a, const PointCloud& b);
double normal_consistency(const PointCloud& a, const PointCloud& b, const CloudMatch& m);

/// Percentages in [0, 100]; a is the prediction.
struct F1Score {
  double precision = 0, recall = 0, f1 = 0;
};
F1Score f1_threshold(const PointCloud& a, const PointCloud& b, double threshold);
F1Score f1_threshold(const CloudMatch& m, double threshold);
double harmonic_f1(double precision, double recall);

struct Eval3DReport {
  double cd = 0;          // raw, unsquared
  double cd_x1000 = 0;
  double cd_squared = 0;  // raw, squared variant
  double nc = 0;
  double precision = 0, recall = 0, f1_at_001 = 0;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  double threshold = 0.01;
};

struct Eval3DOptions {
  std::size_t samples = 100000;
  double threshold = 0.01;
};

/// Normalizes both meshes with gt's unit-cube transform, samples each surface
/// and scores pred against gt.
Eval3DReport eval_3d(const TriMesh& pred, const TriMesh& gt, std::uint64_t seed, const Eval3DOptions& options = {});

nlohmann::json to_json(const Eval3DReport& r);

namespace serial {
/// O(n * m) scan.
NearestResult nn_distances(const PointCloud& query, const PointCloud& target);
}  // namespace serial

}  // namespace evk
