#include <cmath>

#include "evk/camera.hpp"
#include "evk/maskvote.hpp"
#include "support.hpp"

using namespace evk;

namespace {

// Independent membership oracle: pinhole arithmetic written out by hand.
bool oracle_inside(const View& v, const Mask2D& m, const Vec3& p) {
  const Mat3& r = v.rotation;
  const double X = r(0, 0) * p.x + r(0, 1) * p.y + r(0, 2) * p.z + v.translation.x;
  const double Y = r(1, 0) * p.x + r(1, 1) * p.y + r(1, 2) * p.z + v.translation.y;
  const double Z = r(2, 0) * p.x + r(2, 1) * p.y + r(2, 2) * p.z + v.translation.z;
  if (Z <= 0) return false;
  const double u = v.fx * X / Z + v.cx, w = v.fy * Y / Z + v.cy;
  if (u < 0 || w < 0 || u >= m.width || w >= m.height) return false;
  return m.bits[static_cast<std::size_t>(std::floor(w)) * m.width + static_cast<std::size_t>(std::floor(u))] != 0;
}

// Random solid ellipsoid, rotated about Y, centered near the origin.
VoxelGrid random_ellipsoid(Rng& rng, int r) {
  VoxelGrid g(VoxelDomain(r, Bounds{}));
  const Vec3 c = test::random_point(rng, -0.1, 0.1);
  const double a = uniform(rng, 0.12, 0.3), b = uniform(rng, 0.12, 0.3), d = uniform(rng, 0.12, 0.3);
  const double th = uniform(rng, 0, 3.14159), cs = std::cos(th), sn = std::sin(th);
  for (std::size_t i = 0; i < g.bits.size(); ++i) {
    const Vec3 p = g.domain.center(i) - c;
    const double x = cs * p.x + sn * p.z, z = -sn * p.x + cs * p.z;
    g.bits[i] = (x * x) / (a * a) + (p.y * p.y) / (b * b) + (z * z) / (d * d) <= 1.0;
  }
  return g;
}

VoxelGrid random_mask(Rng& rng, int r, double fill) {
  VoxelGrid g(VoxelDomain(r, Bounds{}));
  for (auto& b : g.bits) b = uniform01(rng) < fill;
  return g;
}

bool subset(const VoxelGrid& a, const VoxelGrid& b) {
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && !b.bits[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("maskvote") {

TEST_CASE("project_point: principal ray and off-axis point") {
  const View v = test::simple_view({0, 0, 2}, 100, 64, 128);
  const auto a = project_point(v, {0, 0, 0});
  CHECK(a.u == 64);
  CHECK(a.v == 64);
  CHECK(a.depth == 2);
  CHECK_FALSE(a.behind_camera);
  const auto b = project_point(v, {0.5, 0, 0});
  CHECK(b.u == doctest::Approx(89).epsilon(1e-15));
  CHECK(b.v == 64);
}

TEST_CASE("project_point flags points behind the camera and rejects zero depth") {
  const View v = test::simple_view({0, 0, 2}, 100, 64, 128);
  CHECK(project_point(v, {0, 0, -3}).behind_camera);
  CHECK(project_point(v, {0.1, 0, -3}).depth == -1);
  CHECK_ERROR_KIND(project_point(v, {0.3, 0.2, -2}), ErrorKind::ZeroDepth);
  Mask2D full(128, 128, true);
  CHECK_FALSE(projects_into(v, full, {0, 0, -3}));
  CHECK_FALSE(projects_into(v, full, {0, 0, -2}));
  CHECK_FALSE(projects_into(v, full, {5, 0, 0}));  // outside the image
  CHECK(projects_into(v, full, {0, 0, 0}));
}

TEST_CASE("vote with full masks counts every in-image cell in all 70 views") {
  const auto views = ring_views(70, 20, 2.5, 50, 64);
  std::vector<Mask2D> masks(70, Mask2D(64, 64, true));
  Rng rng(4);
  const VoxelGrid dom = random_mask(rng, 10, 0.3);
  const auto c = vote(dom, views, masks);
  CHECK(c.n_views == 70);
  for (std::size_t i = 0; i < dom.bits.size(); ++i) {
    if (!dom.bits[i]) {
      CHECK(c.counts[i] == 0);
      continue;
    }
    unsigned expect = 0;
    for (const auto& v : views) expect += oracle_inside(v, masks[0], dom.domain.center(i));
    CHECK(c.counts[i] == expect);
    CHECK(expect == 70);  // [-0.5, 0.5]^3 is inside every frustum of this ring
  }
}

TEST_CASE("vote with empty masks is zero everywhere") {
  const auto views = ring_views(8, 20, 2.5, 50, 32);
  std::vector<Mask2D> masks(8, Mask2D(32, 32, false));
  const auto c = vote(VoxelGrid(VoxelDomain(6, Bounds{}), true), views, masks);
  for (auto n : c.counts) CHECK(n == 0);
}

TEST_CASE("one view, left-half mask, two voxels straddling the center") {
  const View v = test::simple_view({0, 0, 2}, 100, 64, 128);
  Mask2D left(128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 64; ++x) left.set(x, y, true);
  VoxelGrid g(VoxelDomain(4, Bounds{}));
  g.set(1, 2, 2, true);  // center x = -0.125 -> u = 57.75
  g.set(2, 2, 2, true);  // center x = +0.125 -> u = 70.25
  CHECK(project_point(v, g.domain.center(1, 2, 2)).u < 64);
  CHECK(project_point(v, g.domain.center(2, 2, 2)).u >= 64);
  const auto c = vote(g, std::vector<View>{v}, std::vector<Mask2D>{left});
  CHECK(c.counts[g.domain.index(1, 2, 2)] == 1);
  CHECK(c.counts[g.domain.index(2, 2, 2)] == 0);
}

TEST_CASE("vote rejects mismatched inputs") {
  const auto views = ring_views(3, 20, 2.5, 50, 32);
  const VoxelGrid g(VoxelDomain(4, Bounds{}), true);
  CHECK_ERROR_KIND(vote(g, views, std::vector<Mask2D>(2, Mask2D(32, 32))), ErrorKind::SizeMismatch);
  CHECK_ERROR_KIND(vote(g, views, std::vector<Mask2D>(3, Mask2D(31, 32))), ErrorKind::SizeMismatch);
}

TEST_CASE("vote_threshold is ceil(tau N)") {
  CHECK(vote_threshold({0.5, 70}) == 35);
  CHECK(vote_threshold({1.0, 70}) == 70);
  CHECK(vote_threshold({0.5, 3}) == 2);
  CHECK(vote_threshold({0.3, 10}) == 3);  // 0.3 * 10 rounds to 3.0000000000000004
  CHECK(vote_threshold({0.01, 70}) == 1);
  CHECK_ERROR_KIND(vote_threshold({0.0, 70}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(vote_threshold({1.5, 70}), ErrorKind::InvalidArgument);
}

TEST_CASE("threshold_mask keeps {2, 3} out of counts {0, 1, 2, 3} at tau 0.5, N 3") {
  CountGrid c(VoxelDomain(2, Bounds{}), 3);
  c.counts[0] = 0;
  c.counts[1] = 1;
  c.counts[2] = 2;
  c.counts[3] = 3;
  const auto m = threshold_mask(c, {0.5, 3});
  CHECK(m.bits[0] == 0);
  CHECK(m.bits[1] == 0);
  CHECK(m.bits[2] == 1);
  CHECK(m.bits[3] == 1);
  const auto all = threshold_mask(c, {1.0, 3});
  CHECK(all.count() == 1);
  CHECK(all.bits[3] == 1);
  CHECK_ERROR_KIND(threshold_mask(c, {0.5, 4}), ErrorKind::InvalidArgument);
}

TEST_CASE("vote properties: bounds, threshold and view monotonicity, serial equality") {
  Rng rng(12);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 5 + trial;
    const auto views = ring_views(n, uniform(rng, -30, 40), 2.5, 50, 40);
    std::vector<Mask2D> masks;
    for (int i = 0; i < n; ++i) {
      Mask2D m(40, 40);
      for (auto& b : m.bits) b = uniform01(rng) < 0.6;
      masks.push_back(m);
    }
    const auto dom = random_mask(rng, 12, 0.5);
    const auto c = vote(dom, views, masks);
    CHECK(c.counts == serial::vote(dom, views, masks).counts);
    for (auto k : c.counts) CHECK(k <= static_cast<unsigned>(n));

    const auto fewer = vote(dom, std::span(views).first(n - 1), std::span(masks).first(n - 1));
    for (std::size_t i = 0; i < c.counts.size(); ++i) CHECK(fewer.counts[i] <= c.counts[i]);

    double prev_tau = 0.05;
    VoxelGrid prev = threshold_mask(c, {prev_tau, n});
    for (double tau = 0.1; tau <= 1.0 + 1e-12; tau += 0.05) {
      const auto m = threshold_mask(c, {std::min(tau, 1.0), n});
      CHECK(subset(m, prev));
      prev = m;
    }
  }
}

TEST_CASE("silhouette masks of a convex grid give every occupied cell the full vote") {
  Rng rng(31);
  const auto views = ring_views(24, 20, 2.5, 50, 64);
  for (int trial = 0; trial < 5; ++trial) {
    const auto shape = random_ellipsoid(rng, 16);
    REQUIRE(shape.count() > 0);
    std::vector<Mask2D> masks;
    for (const auto& v : views) masks.push_back(render_silhouette(shape, v));
    const auto c = vote(shape, views, masks);
    for (std::size_t i = 0; i < shape.bits.size(); ++i)
      if (shape.bits[i]) CHECK(c.counts[i] == 24);
    CHECK(threshold_mask(c, {1.0, 24}).bits == shape.bits);
  }
}

TEST_CASE("render_silhouette covers every projected occupied cell center and nothing far away") {
  VoxelGrid g(VoxelDomain(8, Bounds{}));
  g.set(3, 4, 5, true);
  const View v = ring_views(1, 0, 2.5, 50, 64)[0];
  const auto m = render_silhouette(g, v);
  const auto p = project_point(v, g.domain.center(3, 4, 5));
  CHECK(m.at(static_cast<int>(p.u), static_cast<int>(p.v)));
  CHECK(m.count() < 60);
  CHECK(m.count() >= 4);
}

TEST_CASE("dilate_mask at 0% is the identity and counts grow with the percent") {
  Rng rng(2);
  const auto m = random_ellipsoid(rng, 20);
  CHECK(dilate_mask(m, 0).bits == m.bits);
  std::size_t prev = m.count();
  for (double pct : {9.0, 18.0, 27.0}) {
    const auto d = dilate_mask(m, pct);
    CHECK(d.count() >= prev);
    CHECK(subset(m, d));
    prev = d.count();
  }
  CHECK_ERROR_KIND(dilate_mask(VoxelGrid(VoxelDomain(4, Bounds{})), 9), ErrorKind::EmptyMask);
  CHECK_ERROR_KIND(dilate_mask(m, -1), ErrorKind::InvalidArgument);
}

TEST_CASE("single-voxel ball dilation, enumerated by Euclidean distance") {
  VoxelGrid g(VoxelDomain(9, Bounds{}));
  g.set(4, 4, 4, true);
  const double cell = g.domain.cell_size().x;
  // radius 1 cell: the center and its 6 face neighbors
  const auto plus = dilate_ball(g, 1.0 * cell);
  CHECK(plus.count() == 7);
  CHECK(plus.at(3, 4, 4));
  CHECK(plus.at(4, 4, 5));
  CHECK_FALSE(plus.at(3, 3, 4));
  // radius 1.5 cells also reaches the 12 edge neighbors at sqrt(2) = 1.414
  const auto r15 = dilate_ball(g, 1.5 * cell);
  CHECK(r15.count() == 19);
  CHECK(r15.at(3, 3, 4));
  CHECK_FALSE(r15.at(3, 3, 3));  // corner neighbor at sqrt(3) = 1.732
  CHECK(dilate_ball(g, 1.75 * cell).count() == 27);
}

TEST_CASE("bounding_sphere_radius encloses the occupied cells") {
  VoxelGrid g(VoxelDomain(4, Bounds{}));
  g.set(0, 0, 0, true);
  CHECK(bounding_sphere_radius(g) == doctest::Approx(std::sqrt(3.0) * 0.125));
  g.set(3, 3, 3, true);
  CHECK(bounding_sphere_radius(g) == doctest::Approx(std::sqrt(3.0) * 0.5));
}

TEST_CASE("dilation monotonicity and IoU trend on random masks") {
  Rng rng(40);
  for (int trial = 0; trial < 6; ++trial) {
    const auto m = random_ellipsoid(rng, 16);
    double prev_iou = 1.0;
    VoxelGrid prev = m;
    for (double pct = 0; pct <= 60; pct += 6) {
      const auto d = dilate_mask(m, pct);
      CHECK(subset(prev, d));
      const double iou = mask_iou(d, m);
      CHECK(iou <= prev_iou);
      prev_iou = iou;
      prev = d;
    }
  }
}

TEST_CASE("dilate_ball parallel and serial paths agree") {
  Rng rng(41);
  for (int trial = 0; trial < 4; ++trial) {
    const auto m = random_mask(rng, 14, 0.03);
    const double radius = uniform(rng, 0, 0.3);
    CHECK(dilate_ball(m, radius).bits == serial::dilate_ball(m, radius).bits);
  }
  // dense masks have interior cells, which the parallel path skips
  for (int trial = 0; trial < 4; ++trial) {
    const auto m = random_mask(rng, 16, 0.8);
    const double radius = uniform(rng, 0, 0.4);
    CHECK(dilate_ball(m, radius).bits == serial::dilate_ball(m, radius).bits);
  }
  const Bounds stretched{{-0.5, -1.0, -0.25}, {0.5, 1.0, 0.25}};
  for (int trial = 0; trial < 4; ++trial) {
    VoxelGrid m(VoxelDomain(18, stretched));
    const Vec3 c = test::random_point(rng, -0.2, 0.2);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
      const Vec3 p = m.domain.center(i) - c;
      m.bits[i] = p.x * p.x + 0.25 * p.y * p.y + 4 * p.z * p.z < 0.09;
    }
    if (trial % 2) {
      const auto extra = random_mask(rng, 18, 0.6);
      for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] |= extra.bits[i];
    }
    const double radius = uniform(rng, 0.05, 0.5);
    CHECK(dilate_ball(m, radius).bits == serial::dilate_ball(m, radius).bits);
  }
}

TEST_CASE("mask_iou examples") {
  const VoxelDomain dom(4, Bounds{});
  VoxelGrid a(dom), b(dom), c(dom);
  for (int i = 0; i < 8; ++i) a.bits[i] = 1;
  for (int i = 0; i < 16; ++i) b.bits[i] = 1;
  for (int i = 32; i < 40; ++i) c.bits[i] = 1;
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, b) == 0.5);
  CHECK(mask_iou(a, c) == 0.0);
  CHECK(mask_iou(VoxelGrid(dom), VoxelGrid(dom)) == 1.0);
  CHECK_ERROR_KIND(mask_iou(a, VoxelGrid(VoxelDomain(5, Bounds{}))), ErrorKind::DomainMismatch);
  Bounds other;
  other.max = {1, 1, 1};
  CHECK_ERROR_KIND(mask_iou(a, VoxelGrid(VoxelDomain(4, other))), ErrorKind::DomainMismatch);
}

}  // TEST_SUITE
