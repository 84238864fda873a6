// Parallel kernels against their serial references. Pin the thread count
// with OMP_NUM_THREADS to compare scaling.
#include <benchmark/benchmark.h>

#include "evk/camera.hpp"
#include "evk/dedup.hpp"
#include "evk/maskvote.hpp"
#include "evk/mesh.hpp"
#include "evk/metrics3d.hpp"
#include "evk/render2d.hpp"
#include "evk/rng.hpp"

using namespace evk;

namespace {

VoxelGrid ball(int res, double radius) {
  VoxelGrid g(VoxelDomain(res, Bounds{}));
  for (std::size_t i = 0; i < g.bits.size(); ++i) g.bits[i] = norm(g.domain.center(i)) <= radius;
  return g;
}

TriMesh sphere_mesh(int rings, int segments) {
  TriMesh m;
  for (int r = 0; r <= rings; ++r)
    for (int s = 0; s < segments; ++s) {
      const double th = std::numbers::pi * r / rings, ph = 2 * std::numbers::pi * s / segments;
      m.vertices.push_back(Vec3{std::sin(th) * std::cos(ph), std::cos(th), std::sin(th) * std::sin(ph)} * 0.45);
    }
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      const auto a = static_cast<std::uint32_t>(r * segments + s), b = static_cast<std::uint32_t>(r * segments + (s + 1) % segments);
      const auto c = a + segments, d = b + segments;
      if (r > 0) m.triangles.push_back({a, b, d});
      if (r < rings - 1) m.triangles.push_back({a, d, c});
    }
  return m;
}

struct VoteInput {
  VoxelGrid domain;
  std::vector<View> views;
  std::vector<Mask2D> masks;
  VoteInput() : domain(VoxelDomain(64, Bounds{}), true), views(ring_views(70, 20, 2.5, 50, 256)) {
    const VoxelGrid shape = ball(64, 0.3);
    for (const auto& v : views) masks.push_back(render_silhouette(shape, v));
  }
};

const VoteInput& vote_input() {
  static const VoteInput in;
  return in;
}

template <bool Parallel>
void BM_vote(benchmark::State& st) {
  const auto& in = vote_input();
  for (auto _ : st)
    benchmark::DoNotOptimize(Parallel ? vote(in.domain, in.views, in.masks)
                                      : serial::vote(in.domain, in.views, in.masks));
}

template <bool Parallel>
void BM_dilate_ball(benchmark::State& st) {
  const VoxelGrid m = ball(96, 0.25);
  const double r = 0.08;
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? dilate_ball(m, r) : serial::dilate_ball(m, r));
}

template <bool Parallel>
void BM_sample_surface(benchmark::State& st) {
  const TriMesh mesh = sphere_mesh(64, 128);
  for (auto _ : st)
    benchmark::DoNotOptimize(Parallel ? sample_surface(mesh, 100000, 1) : serial::sample_surface(mesh, 100000, 1));
}

template <bool Parallel>
void BM_nn_distances(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const TriMesh mesh = sphere_mesh(32, 64);
  const PointCloud a = sample_surface(mesh, n, 1), b = sample_surface(mesh, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? nn_distances(a, b) : serial::nn_distances(a, b));
}

template <bool Parallel>
void BM_rasterize(benchmark::State& st) {
  const TriMesh mesh = sphere_mesh(64, 128);
  const View view = ring_views(1, 20, 2.5, 50, 512)[0];
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? rasterize(mesh, view) : serial::rasterize(mesh, view));
}

template <bool Parallel>
void BM_ssim(benchmark::State& st) {
  Rng rng(3);
  Image a(512, 512), b(512, 512);
  for (auto& p : a.rgb) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  for (std::size_t i = 0; i < b.rgb.size(); ++i) b.rgb[i] = static_cast<std::uint8_t>((a.rgb[i] + uniform_index(rng, 16)) & 255);
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? ssim(a, b) : serial::ssim(a, b));
}

template <bool Parallel>
void BM_greedy_prune(benchmark::State& st) {
  Rng rng(4);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 4000; ++i) {
    std::vector<double> v(64);
    for (double& x : v) x = normal(rng);
    rows.push_back(std::move(v));
    ids.push_back("item" + std::to_string(i));
  }
  const auto set = EmbeddingSet::from_rows(ids, rows, true);
  for (auto _ : st) benchmark::DoNotOptimize(Parallel ? greedy_prune(set, 0.3) : serial::greedy_prune(set, 0.3));
}

}  // namespace

BENCHMARK(BM_vote<true>)->Name("vote/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_vote<false>)->Name("vote/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dilate_ball<true>)->Name("dilate_ball/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dilate_ball<false>)->Name("dilate_ball/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sample_surface<true>)->Name("sample_surface/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sample_surface<false>)->Name("sample_surface/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_nn_distances<true>)->Name("nn_distances/parallel")->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_nn_distances<false>)->Name("nn_distances/serial")->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rasterize<true>)->Name("rasterize/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rasterize<false>)->Name("rasterize/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssim<true>)->Name("ssim/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssim<false>)->Name("ssim/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_greedy_prune<true>)->Name("greedy_prune/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_greedy_prune<false>)->Name("greedy_prune/serial")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
