#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "evk/error.hpp"
#include "evk/mesh.hpp"
#include "evk/rng.hpp"

namespace evk {

UnitCubeTransform unit_cube_transform(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw Error(ErrorKind::EmptyMesh, "mesh has no vertices");
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const auto& v : mesh.vertices)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  const Vec3 extent = hi - lo;
  const double longest = std::max({extent.x, extent.y, extent.z});
  if (!(longest > 0)) throw Error(ErrorKind::DegenerateExtent, "mesh bounding box has zero size");
  return {1.0 / longest, -((lo + hi) * 0.5)};
}

TriMesh apply_transform(const TriMesh& mesh, const UnitCubeTransform& transform) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = transform.apply(v);
  return out;
}

NormalizedMesh normalize_unit_cube(const TriMesh& mesh) {
  const auto transform = unit_cube_transform(mesh);
  return {apply_transform(mesh, transform), transform};
}

namespace {

constexpr std::size_t kSampleChunk = 4096;

struct AreaTable {
  std::vector<double> cumulative;
  double total = 0;
};

AreaTable area_table(const TriMesh& mesh) {
  AreaTable table;
  table.cumulative.resize(mesh.triangles.size());
  double acc = 0;
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    acc += mesh.face_area(f);
    table.cumulative[f] = acc;
  }
  table.total = acc;
  if (!(acc > 0)) throw Error(ErrorKind::EmptyMesh, "mesh has no non-degenerate triangle");
  return table;
}

void sample_chunk(const TriMesh& mesh, const AreaTable& table, std::uint64_t seed, std::size_t chunk,
                  std::size_t n, PointCloud& cloud) {
  Rng rng(derive_seed(seed, chunk));
  const std::size_t begin = chunk * kSampleChunk;
  const std::size_t end = std::min(n, begin + kSampleChunk);
  const auto last = table.cumulative.size() - 1;
  for (std::size_t i = begin; i < end; ++i) {
    const double target = uniform01(rng) * table.total;
    auto f = static_cast<std::size_t>(
        std::upper_bound(table.cumulative.begin(), table.cumulative.end(), target) - table.cumulative.begin());
    f = std::min(f, last);
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const auto& t = mesh.triangles[f];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    cloud.points[i] = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
    cloud.normals[i] = mesh.face_normal(f);
  }
}

PointCloud prepare_cloud(std::size_t n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample count must be >= 1");
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.normals.resize(n);
  return cloud;
}

}  // namespace

PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  const auto table = area_table(mesh);
  auto cloud = prepare_cloud(n);
  const auto chunks = static_cast<long>((n + kSampleChunk - 1) / kSampleChunk);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) sample_chunk(mesh, table, seed, static_cast<std::size_t>(c), n, cloud);
  return cloud;
}

PointCloud serial::sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  const auto table = area_table(mesh);
  auto cloud = prepare_cloud(n);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  for (std::size_t c = 0; c < chunks; ++c) sample_chunk(mesh, table, seed, c, n, cloud);
  return cloud;
}

bool triangle_box_overlap(const Vec3& box_center, const Vec3& h, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
  const std::array<Vec3, 3> edges{v1 - v0, v2 - v1, v0 - v2};
  const std::array<Vec3, 3> unit{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

  auto separated = [&](const Vec3& axis) {
    const double p0 = dot(axis, v0), p1 = dot(axis, v1), p2 = dot(axis, v2);
    const double r = h.x * std::abs(axis.x) + h.y * std::abs(axis.y) + h.z * std::abs(axis.z);
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };

  for (const auto& e : edges)
    for (const auto& u : unit)
      if (separated(cross(u, e))) return false;
  for (const auto& u : unit)
    if (separated(u)) return false;
  return !separated(cross(edges[0], edges[1]));
}

VoxelGrid voxelize(const TriMesh& mesh, int resolution, const VoxelizeOptions& options) {
  if (resolution < 2) throw Error(ErrorKind::InvalidArgument, "voxel resolution must be >= 2");
  if (mesh.triangles.empty()) throw Error(ErrorKind::EmptyMesh, "mesh has no triangles");
  VoxelGrid grid(VoxelDomain(resolution, options.bounds));
  const auto& dom = grid.domain;
  const Vec3 cs = dom.cell_size();
  // Closed boxes, widened by a hair so faces lying exactly on a cell boundary
  // plane register on both sides regardless of rounding.
  const Vec3 half = cs * (0.5 * (1.0 + 1e-9));
  const Vec3 bmin = dom.bounds().min;

  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    std::array<int, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      const double mn = std::min({a[k], b[k], c[k]});
      const double mx = std::max({a[k], b[k], c[k]});
      lo[k] = std::max(0, static_cast<int>(std::floor((mn - bmin[k]) / cs[k])) - 1);
      hi[k] = std::min(resolution - 1, static_cast<int>(std::floor((mx - bmin[k]) / cs[k])) + 1);
    }
    for (int x = lo[0]; x <= hi[0]; ++x)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int z = lo[2]; z <= hi[2]; ++z) {
          const auto i = dom.index(x, y, z);
          if (grid.bits[i]) continue;
          if (triangle_box_overlap(dom.center(x, y, z), half, a, b, c)) grid.bits[i] = 1;
        }
  }

  if (options.fill_interior) {
    // Flood the empty space from the lattice border; whatever stays unreached
    // is enclosed.
    std::vector<std::uint8_t> outside(grid.bits.size(), 0);
    std::deque<CellIndex> queue;
    auto seed = [&](int x, int y, int z) {
      const auto i = dom.index(x, y, z);
      if (!grid.bits[i] && !outside[i]) {
        outside[i] = 1;
        queue.push_back({x, y, z});
      }
    };
    const int r = resolution - 1;
    for (int u = 0; u <= r; ++u)
      for (int v = 0; v <= r; ++v) {
        seed(0, u, v), seed(r, u, v), seed(u, 0, v), seed(u, r, v), seed(u, v, 0), seed(u, v, r);
      }
    constexpr int kSteps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!queue.empty()) {
      const auto cell = queue.front();
      queue.pop_front();
      for (const auto& s : kSteps) {
        const int x = cell.x + s[0], y = cell.y + s[1], z = cell.z + s[2];
        if (dom.contains(x, y, z)) seed(x, y, z);
      }
    }
    for (std::size_t i = 0; i < grid.bits.size(); ++i)
      if (!outside[i]) grid.bits[i] = 1;
  }
  return grid;
}

TriMesh voxel_surface_mesh(const VoxelGrid& grid) {
  const auto& dom = grid.domain;
  const int r = dom.resolution();
  TriMesh mesh;
  std::map<std::array<int, 3>, std::uint32_t> corner_ids;
  auto corner = [&](int x, int y, int z) {
    const std::array<int, 3> key{x, y, z};
    auto [it, inserted] = corner_ids.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) {
      const Vec3 cs = dom.cell_size();
      mesh.vertices.push_back({dom.bounds().min.x + x * cs.x, dom.bounds().min.y + y * cs.y,
                               dom.bounds().min.z + z * cs.z});
    }
    return it->second;
  };
  auto occupied = [&](int x, int y, int z) { return dom.contains(x, y, z) && grid.at(x, y, z); };

  for (int x = 0; x < r; ++x)
    for (int y = 0; y < r; ++y)
      for (int z = 0; z < r; ++z) {
        if (!grid.at(x, y, z)) continue;
        for (int axis = 0; axis < 3; ++axis)
          for (int dir : {-1, 1}) {
            std::array<int, 3> n{x, y, z};
            n[axis] += dir;
            if (occupied(n[0], n[1], n[2])) continue;
            // Face corners in counter-clockwise order seen from outside.
            const int u = (axis + 1) % 3, v = (axis + 2) % 3;
            std::array<int, 3> base{x, y, z};
            if (dir > 0) base[axis] += 1;
            std::array<std::array<int, 3>, 4> q{base, base, base, base};
            q[1][u] += 1;
            q[2][u] += 1;
            q[2][v] += 1;
            q[3][v] += 1;
            if (dir < 0) std::swap(q[1], q[3]);
            std::array<std::uint32_t, 4> id{};
            for (int k = 0; k < 4; ++k) id[k] = corner(q[k][0], q[k][1], q[k][2]);
            mesh.triangles.push_back({id[0], id[1], id[2]});
            mesh.triangles.push_back({id[0], id[2], id[3]});
          }
      }
  return mesh;
}

}  // namespace evk
