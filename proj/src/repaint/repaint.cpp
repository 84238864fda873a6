#include "evk/repaint.hpp"

#include <cmath>
#include <vector>

#include "evk/error.hpp"
#include "evk/reduce.hpp"
#include "evk/rng.hpp"

namespace evk {

namespace {

void require_same(const Latent& a, const Latent& b, const char* what) {
  if (!a.same_shape(b) || a.data.size() != b.data.size())
    throw Error(ErrorKind::DimMismatch, std::string(what) + ": latent shapes differ");
}

}  // namespace

Latent::Latent(int c, int r, float fill) : channels(c), resolution(r) {
  if (c < 1 || r < 1) throw Error(ErrorKind::DimMismatch, "latent extents must be positive");
  data.assign(static_cast<std::size_t>(c) * cells(), fill);
}

Latent Latent::from_tensor(const TensorBlob& blob) {
  if (blob.dims.size() != 4 || blob.dims[1] != blob.dims[2] || blob.dims[2] != blob.dims[3])
    throw Error(ErrorKind::DimMismatch, "latent tensor must have dims [C, R, R, R]");
  Latent z(static_cast<int>(blob.dims[0]), static_cast<int>(blob.dims[1]));
  if (blob.data.size() != z.data.size()) throw Error(ErrorKind::DimMismatch, "latent payload size mismatch");
  z.data = blob.data;
  return z;
}

TensorBlob Latent::to_tensor() const {
  const auto r = static_cast<std::uint64_t>(resolution);
  return TensorBlob({static_cast<std::uint64_t>(channels), r, r, r}, data);
}

Latent gaussian_latent(int channels, int resolution, std::uint64_t seed) {
  Latent z(channels, resolution);
  Rng rng(seed);
  for (auto& v : z.data) v = static_cast<float>(normal(rng));
  return z;
}

Schedule Schedule::linear(int steps) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "schedule needs at least one step");
  Schedule s;
  for (int k = 0; k < steps; ++k) s.timesteps.push_back(1.0 - static_cast<double>(k) / steps);
  return s;
}

void Schedule::validate() const {
  if (timesteps.empty()) throw Error(ErrorKind::InvalidArgument, "empty schedule");
  for (std::size_t k = 0; k < timesteps.size(); ++k) {
    if (!(timesteps[k] > 0 && timesteps[k] <= 1)) throw Error(ErrorKind::InvalidArgument, "timestep outside (0, 1]");
    if (k > 0 && !(timesteps[k] < timesteps[k - 1]))
      throw Error(ErrorKind::InvalidArgument, "timesteps must be strictly decreasing");
  }
}

Latent ZeroDenoiser::evaluate(const Latent& x, double, std::span<const std::uint8_t>) const {
  return Latent(x.channels, x.resolution, 0.0f);
}

Latent IdentityDenoiser::evaluate(const Latent& x, double, std::span<const std::uint8_t>) const { return x; }

Latent LinearDenoiser::evaluate(const Latent& x, double t, std::span<const std::uint8_t>) const {
  require_same(x, target_, "linear denoiser");
  Latent v = x;
  const auto inv_t = static_cast<float>(1.0 / t);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = (x.data[i] - target_.data[i]) * inv_t;
  return v;
}

std::unique_ptr<DenoiserPort> make_denoiser(const std::string& spec) {
  if (spec == "zero") return std::make_unique<ZeroDenoiser>();
  if (spec == "identity") return std::make_unique<IdentityDenoiser>();
  if (spec.rfind("linear:", 0) == 0)
    return std::make_unique<LinearDenoiser>(Latent::from_tensor(read_tensor(spec.substr(7))));
  throw Error(ErrorKind::InvalidArgument, "unknown denoiser '" + spec + "' (zero, identity, linear:<file>)");
}

Latent interpolate(const Latent& x0, const Latent& eps, double t) {
  require_same(x0, eps, "interpolate");
  if (!(t >= 0 && t <= 1)) throw Error(ErrorKind::InvalidArgument, "t must be in [0, 1]");
  // Endpoints are returned verbatim (also preserves signed zeros).
  if (t == 0) return x0;
  if (t == 1) return eps;
  Latent out = x0;
  const double a = 1.0 - t;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<float>(a * x0.data[i] + t * eps.data[i]);
  return out;
}

Latent noisy_source(const Latent& src, const Latent& eps, double t) { return interpolate(src, eps, t); }

Latent fuse(const Latent& z_tgt, const Latent& z_src, const VoxelGrid& mask) {
  require_same(z_tgt, z_src, "fuse");
  if (mask.resolution() != z_tgt.resolution || mask.bits.size() != z_tgt.cells())
    throw Error(ErrorKind::DimMismatch, "mask resolution does not match the latent lattice");
  Latent out = z_src;
  const std::size_t cells = z_tgt.cells();
  for (int c = 0; c < z_tgt.channels; ++c)
    for (std::size_t i = 0; i < cells; ++i)
      if (mask.bits[i]) out.at(c, i) = z_tgt.at(c, i);
  return out;
}

RepaintResult repaint_run(const DenoiserPort& denoiser, const Latent& src, const VoxelGrid& mask,
                          const Schedule& schedule, std::span<const std::uint8_t> condition, std::uint64_t seed,
                          const RepaintOptions& options) {
  schedule.validate();
  if (mask.resolution() != src.resolution) throw Error(ErrorKind::DimMismatch, "mask does not match latent lattice");

  RepaintResult result;
  result.noise = gaussian_latent(src.channels, src.resolution, derive_seed(seed, 0));
  const Latent& eps = result.noise;
  Rng fresh(derive_seed(seed, 1));

  auto source_at = [&](double t) {
    if (options.source_noise == SourceNoise::SharedPath) return noisy_source(src, eps, t);
    Latent z = src;
    for (auto& v : z.data) v = static_cast<float>(v + t * normal(fresh));
    return z;
  };

  const auto& ts = schedule.timesteps;
  Latent z = fuse(eps, source_at(ts.front()), mask);
  if (options.record_trajectory) result.trajectory.push_back({ts.front(), z});

  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double t = ts[k];
    const double t_next = k + 1 < ts.size() ? ts[k + 1] : 0.0;
    const Latent v = denoiser.evaluate(z, t, condition);
    if (!v.same_shape(z) || v.data.size() != z.data.size())
      throw Error(ErrorKind::DimMismatch, "denoiser output shape differs from its input");
    const auto dt = static_cast<float>(t_next - t);
    Latent z_tgt = z;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      if (!std::isfinite(v.data[i])) throw Error(ErrorKind::DenoiserFailure, denoiser.name() + " produced a non-finite value");
      z_tgt.data[i] = z.data[i] + dt * v.data[i];
    }
    z = fuse(z_tgt, source_at(t_next), mask);
    if (options.record_trajectory) result.trajectory.push_back({t_next, z});
  }
  for (float x : z.data)
    if (!std::isfinite(x)) throw Error(ErrorKind::DenoiserFailure, "sampler diverged");
  result.output = std::move(z);
  return result;
}

double cfm_loss(std::span<const double> pred, std::span<const double> eps, std::span<const double> x0) {
  if (pred.size() != eps.size() || pred.size() != x0.size())
    throw Error(ErrorKind::DimMismatch, "cfm_loss operands differ in length");
  if (pred.empty()) throw Error(ErrorKind::DimMismatch, "cfm_loss of empty tensors");
  std::vector<double> sq(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - (eps[i] - x0[i]);
    sq[i] = r * r;
  }
  return pairwise_sum(sq) / static_cast<double>(sq.size());
}

double cfm_loss(const Latent& pred, const Latent& eps, const Latent& x0) {
  require_same(pred, eps, "cfm_loss");
  require_same(pred, x0, "cfm_loss");
  const std::vector<double> p(pred.data.begin(), pred.data.end());
  const std::vector<double> e(eps.data.begin(), eps.data.end());
  const std::vector<double> x(x0.data.begin(), x0.data.end());
  return cfm_loss(p, e, x);
}

}  // namespace evk
