#include <cmath>

#include "evk/repaint.hpp"
#include "evk/tensor.hpp"
#include "support.hpp"

using namespace evk;

namespace {

Latent filled(int c, int r, float v) { return Latent(c, r, v); }

VoxelGrid left_half(int r) {
  VoxelGrid m(VoxelDomain(r, Bounds{}));
  for (int x = 0; x < r / 2; ++x)
    for (int y = 0; y < r; ++y)
      for (int z = 0; z < r; ++z) m.set(x, y, z, true);
  return m;
}

VoxelGrid random_mask(Rng& rng, int r) {
  VoxelGrid m(VoxelDomain(r, Bounds{}));
  const double fill = uniform(rng, 0.1, 0.9);
  for (auto& b : m.bits) b = uniform01(rng) < fill;
  return m;
}

// Velocity field whose value depends on x, t and the condition bytes.
class WobblyDenoiser final : public DenoiserPort {
 public:
  Latent evaluate(const Latent& x, double t, std::span<const std::uint8_t> cond) const override {
    Latent v = x;
    const double k = cond.empty() ? 1.0 : 1.0 + cond[0] / 255.0;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(std::sin(x.data[i] * k) + t);
    return v;
  }
  std::string name() const override { return "wobbly"; }
};

class NanDenoiser final : public DenoiserPort {
 public:
  Latent evaluate(const Latent& x, double, std::span<const std::uint8_t>) const override {
    Latent v = x;
    v.data[0] = std::nanf("");
    return v;
  }
  std::string name() const override { return "nan"; }
};

}  // namespace

TEST_SUITE("repaint") {

TEST_CASE("interpolate endpoints and midpoint") {
  const Latent x0 = gaussian_latent(2, 4, 1), eps = gaussian_latent(2, 4, 2);
  CHECK(interpolate(x0, eps, 0) == x0);
  CHECK(interpolate(x0, eps, 1) == eps);
  const auto mid = interpolate(filled(1, 3, 0), filled(1, 3, 2), 0.5);
  for (float v : mid.data) CHECK(v == 1.0f);
  CHECK_ERROR_KIND(interpolate(x0, gaussian_latent(1, 4, 2), 0.5), ErrorKind::DimMismatch);
  CHECK_ERROR_KIND(interpolate(x0, eps, 1.5), ErrorKind::InvalidArgument);
}

TEST_CASE("interpolate(a, b, t) + interpolate(b, a, t) = a + b") {
  Rng rng(1);
  const Latent a = gaussian_latent(3, 5, 10), b = gaussian_latent(3, 5, 11);
  for (int k = 0; k < 20; ++k) {
    const double t = uniform01(rng);
    const auto p = interpolate(a, b, t), q = interpolate(b, a, t);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double lhs = double(p.data[i]) + q.data[i], rhs = double(a.data[i]) + b.data[i];
      CHECK(std::abs(lhs - rhs) <= 1e-6 * (std::abs(a.data[i]) + std::abs(b.data[i]) + 1e-30));
    }
  }
}

TEST_CASE("noisy_source examples") {
  const Latent src = filled(2, 3, 4), eps = filled(2, 3, 0);
  CHECK(noisy_source(src, eps, 0) == src);
  CHECK(noisy_source(src, eps, 1) == eps);
  for (float v : noisy_source(src, eps, 0.25).data) CHECK(v == 3.0f);
}

TEST_CASE("fuse by masks") {
  const Latent tgt = filled(2, 4, 1), src = filled(2, 4, 5);
  const VoxelDomain dom(4, Bounds{});
  CHECK(fuse(tgt, src, VoxelGrid(dom, true)) == tgt);
  CHECK(fuse(tgt, src, VoxelGrid(dom, false)) == src);
  const auto half = fuse(tgt, src, left_half(4));
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < half.cells(); ++i) CHECK(half.at(c, i) == (dom.cell(i).x < 2 ? 1.0f : 5.0f));
  CHECK_ERROR_KIND(fuse(tgt, src, VoxelGrid(VoxelDomain(3, Bounds{}))), ErrorKind::DimMismatch);
  CHECK_ERROR_KIND(fuse(tgt, filled(1, 4, 5), VoxelGrid(dom)), ErrorKind::DimMismatch);
}

TEST_CASE("fuse(z, z, m) = z") {
  Rng rng(3);
  const Latent z = gaussian_latent(3, 6, 4);
  for (int k = 0; k < 5; ++k) CHECK(fuse(z, z, random_mask(rng, 6)) == z);
}

TEST_CASE("schedule validation") {
  const auto s = Schedule::linear(4);
  CHECK(s.timesteps == std::vector<double>{1.0, 0.75, 0.5, 0.25});
  CHECK_NOTHROW(s.validate());
  CHECK_ERROR_KIND(Schedule::linear(0), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND((Schedule{{1.0, 1.0}}.validate()), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND((Schedule{{0.5, 0.0}}.validate()), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND((Schedule{{1.5}}.validate()), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(Schedule{}.validate(), ErrorKind::InvalidArgument);
}

TEST_CASE("an all-zero mask reproduces the source exactly") {
  const Latent src = gaussian_latent(2, 5, 7);
  const VoxelGrid empty(VoxelDomain(5, Bounds{}));
  WobblyDenoiser wobbly;
  for (const DenoiserPort* d : std::initializer_list<const DenoiserPort*>{new ZeroDenoiser, new IdentityDenoiser, &wobbly}) {
    CHECK(repaint_run(*d, src, empty, Schedule::linear(25), {}, 3).output == src);
    if (d != &wobbly) delete d;
  }
}

TEST_CASE("an all-ones mask with the identity denoiser ignores the source") {
  const VoxelGrid full(VoxelDomain(4, Bounds{}), true);
  IdentityDenoiser id;
  const auto a = repaint_run(id, gaussian_latent(2, 4, 1), full, Schedule::linear(10), {}, 9);
  const auto b = repaint_run(id, gaussian_latent(2, 4, 2), full, Schedule::linear(10), {}, 9);
  CHECK(a.output == b.output);
}

TEST_CASE("linear denoiser integrates exactly to its target inside the mask") {
  const Latent src = gaussian_latent(3, 6, 5), target = gaussian_latent(3, 6, 6);
  Rng rng(8);
  const VoxelGrid mask = random_mask(rng, 6);
  const LinearDenoiser den(target);
  const auto r = repaint_run(den, src, mask, Schedule::linear(10), {}, 21);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < src.cells(); ++i) {
      if (mask.bits[i])
        CHECK(std::abs(r.output.at(c, i) - target.at(c, i)) < 1e-5);
      else
        CHECK(r.output.at(c, i) == src.at(c, i));
    }
}

TEST_CASE("outside the mask every recorded step equals the noised source bit for bit") {
  const Latent src = gaussian_latent(2, 5, 15);
  Rng rng(16);
  const VoxelGrid mask = random_mask(rng, 5);
  RepaintOptions opt;
  opt.record_trajectory = true;
  WobblyDenoiser den;
  const std::vector<std::uint8_t> cond{17, 4};
  const auto r = repaint_run(den, src, mask, Schedule::linear(25), cond, 44, opt);
  REQUIRE(r.trajectory.size() == 26);
  CHECK(r.trajectory.back().t == 0.0);
  for (const auto& step : r.trajectory) {
    const Latent expect = noisy_source(src, r.noise, step.t);
    for (int c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < src.cells(); ++i)
        if (!mask.bits[i]) CHECK(step.fused.at(c, i) == expect.at(c, i));
  }
  CHECK(r.trajectory.back().fused == r.output);
}

TEST_CASE("repaint_run is deterministic in its seed") {
  const Latent src = gaussian_latent(2, 4, 1);
  Rng rng(2);
  const VoxelGrid mask = random_mask(rng, 4);
  WobblyDenoiser den;
  const auto a = repaint_run(den, src, mask, Schedule::linear(8), {}, 5);
  const auto b = repaint_run(den, src, mask, Schedule::linear(8), {}, 5);
  const auto c = repaint_run(den, src, mask, Schedule::linear(8), {}, 6);
  CHECK(a.output == b.output);
  CHECK(a.output != c.output);
  RepaintOptions fresh;
  fresh.source_noise = SourceNoise::FreshGaussian;
  const auto f1 = repaint_run(den, src, mask, Schedule::linear(8), {}, 5, fresh);
  const auto f2 = repaint_run(den, src, mask, Schedule::linear(8), {}, 5, fresh);
  CHECK(f1.output == f2.output);
  // the fresh-noise variant still lands on the source outside the mask (t = 0)
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < src.cells(); ++i)
      if (!mask.bits[i]) CHECK(f1.output.at(c, i) == src.at(c, i));
}

TEST_CASE("repaint_run errors") {
  const Latent src = gaussian_latent(1, 4, 1);
  NanDenoiser nan;
  CHECK_ERROR_KIND(repaint_run(nan, src, VoxelGrid(VoxelDomain(4, Bounds{}), true), Schedule::linear(3), {}, 1),
                   ErrorKind::DenoiserFailure);
  CHECK_ERROR_KIND(repaint_run(ZeroDenoiser{}, src, VoxelGrid(VoxelDomain(3, Bounds{})), Schedule::linear(3), {}, 1),
                   ErrorKind::DimMismatch);
  const LinearDenoiser wrong(gaussian_latent(2, 4, 1));
  CHECK_ERROR_KIND(repaint_run(wrong, src, VoxelGrid(VoxelDomain(4, Bounds{})), Schedule::linear(3), {}, 1),
                   ErrorKind::DimMismatch);
}

TEST_CASE("make_denoiser parses specs") {
  const auto dir = test::temp_dir("repaint_den");
  write_tensor(dir / "t.evk", gaussian_latent(2, 3, 4).to_tensor());
  CHECK(make_denoiser("zero")->name() == "zero");
  CHECK(make_denoiser("identity")->name() == "identity");
  const auto lin = make_denoiser("linear:" + (dir / "t.evk").string());
  CHECK(lin->name() == "linear");
  CHECK(dynamic_cast<const LinearDenoiser&>(*lin).target() == gaussian_latent(2, 3, 4));
  CHECK_ERROR_KIND(make_denoiser("nope"), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(make_denoiser("linear:" + (dir / "missing.evk").string()), ErrorKind::IoError);
}

TEST_CASE("latents round-trip through tensors and reject bad shapes") {
  const Latent z = gaussian_latent(3, 4, 9);
  const auto t = z.to_tensor();
  CHECK(t.dims == std::vector<std::uint64_t>{3, 4, 4, 4});
  CHECK(Latent::from_tensor(t) == z);
  CHECK_ERROR_KIND(Latent::from_tensor(TensorBlob({3, 4, 4, 5})), ErrorKind::DimMismatch);
  CHECK_ERROR_KIND(Latent::from_tensor(TensorBlob({4, 4, 4})), ErrorKind::DimMismatch);
}

TEST_CASE("cfm_loss examples and oracle") {
  Rng rng(77);
  std::vector<double> eps(500), x0(500), pred(500);
  for (std::size_t i = 0; i < 500; ++i) {
    eps[i] = normal(rng);
    x0[i] = normal(rng);
    pred[i] = eps[i] - x0[i];
  }
  CHECK(cfm_loss(pred, eps, x0) == 0.0);
  std::vector<double> zero(7, 0.0), c(7, 1.5);
  CHECK(cfm_loss(c, zero, zero) == 2.25);

  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 3000);
    std::vector<double> p(n), e(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = normal(rng) * 3;
      e[i] = normal(rng);
      x[i] = normal(rng);
    }
    double naive = 0;
    for (std::size_t i = 0; i < n; ++i) naive += (p[i] - (e[i] - x[i])) * (p[i] - (e[i] - x[i]));
    naive /= static_cast<double>(n);
    const double got = cfm_loss(p, e, x);
    CHECK(std::abs(got - naive) <= 1e-12 * naive);
    CHECK(got >= 0);
  }
  CHECK_ERROR_KIND(cfm_loss(std::vector<double>(3), std::vector<double>(2), std::vector<double>(3)),
                   ErrorKind::DimMismatch);
  const Latent a = gaussian_latent(1, 3, 1);
  CHECK(cfm_loss(a, a, Latent(1, 3, 0.0f)) == doctest::Approx(0.0));
}

}  // TEST_SUITE
