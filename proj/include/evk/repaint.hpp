#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evk/geom.hpp"
#include "evk/tensor.hpp"

namespace evk {

/// Latent over a voxel lattice, dims [C, R, R, R]; cell order matches
/// VoxelDomain::index.
struct Latent {
  int channels = 0;
  int resolution = 0;
  std::vector<float> data;

  Latent() = default;
  Latent(int c, int r, float fill = 0.0f);

  std::size_t cells() const {
    return static_cast<std::size_t>(resolution) * resolution * resolution;
  }
  float& at(int c, std::size_t cell) { return data[static_cast<std::size_t>(c) * cells() + cell]; }
  float at(int c, std::size_t cell) const { return data[static_cast<std::size_t>(c) * cells() + cell]; }
  bool same_shape(const Latent& o) const { return channels == o.channels && resolution == o.resolution; }

  static Latent from_tensor(const TensorBlob& blob);
  TensorBlob to_tensor() const;

  friend bool operator==(const Latent&, const Latent&) = default;
};

/// Standard-normal latent, deterministic in seed.
Latent gaussian_latent(int channels, int resolution, std::uint64_t seed);

/// Strictly decreasing timesteps in (0, 1]; the sampler integrates from each
/// timestep to the next and from the last one to 0.
struct Schedule {
  std::vector<double> timesteps;

  static Schedule linear(int steps);  // 1, 1 - 1/T, ..., 1/T
  void validate() const;
};

/// Velocity field evaluated by the sampler. Implementations must be
/// deterministic for fixed inputs.
class DenoiserPort {
 public:
  virtual ~DenoiserPort() = default;
  virtual Latent evaluate(const Latent& x, double t, std::span<const std::uint8_t> condition) const = 0;
  virtual std::string name() const = 0;
};

class ZeroDenoiser final : public DenoiserPort {
 public:
  Latent evaluate(const Latent& x, double t, std::span<const std::uint8_t> condition) const override;
  std::string name() const override { return "zero"; }
};

class IdentityDenoiser final : public DenoiserPort {
 public:
  Latent evaluate(const Latent& x, double t, std::span<const std::uint8_t> condition) const override;
  std::string name() const override { return "identity"; }
};

/// Exact rectified-flow velocity toward a known clean latent:
/// v(x, t) = (x - x0) / t, which equals eps - x0 on the path x = (1-t) x0 + t eps.
class LinearDenoiser final : public DenoiserPort {
 public:
  explicit LinearDenoiser(Latent target) : target_(std::move(target)) {}
  Latent evaluate(const Latent& x, double t, std::span<const std::uint8_t> condition) const override;
  std::string name() const override { return "linear"; }
  const Latent& target() const { return target_; }

 private:
  Latent target_;
};

/// "zero", "identity" or "linear:<tensor file>".
std::unique_ptr<DenoiserPort> make_denoiser(const std::string& spec);

/// x(t) = (1 - t) x0 + t eps
Latent interpolate(const Latent& x0, const Latent& eps, double t);

/// Source latent noised to level t along the same path.
Latent noisy_source(const Latent& src, const Latent& eps, double t);

/// mask * z_tgt + (1 - mask) * z_src, per cell, broadcast over channels.
Latent fuse(const Latent& z_tgt, const Latent& z_src, const VoxelGrid& mask);

enum class SourceNoise {
  SharedPath,     // one noise draw per run, source follows interpolate(src, eps, t)
  FreshGaussian,  // src + t * n with a new draw n at every step
};

struct RepaintOptions {
  SourceNoise source_noise = SourceNoise::SharedPath;
  bool record_trajectory = false;
};

struct RepaintStep {
  double t = 0;  // noise level the fused latent sits at
  Latent fused;
};

struct RepaintResult {
  Latent output;
  Latent noise;  // the run's shared draw
  std::vector<RepaintStep> trajectory;
};

RepaintResult repaint_run(const DenoiserPort& denoiser, const Latent& src, const VoxelGrid& mask,
                          const Schedule& schedule, std::span<const std::uint8_t> condition, std::uint64_t seed,
                          const RepaintOptions& options = {});

/// mean((pred - (eps - x0))^2)
double cfm_loss(std::span<const double> pred, std::span<const double> eps, std::span<const double> x0);
double cfm_loss(const Latent& pred, const Latent& eps, const Latent& x0);

}  // namespace evk
