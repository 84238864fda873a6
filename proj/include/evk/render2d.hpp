#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "evk/geom.hpp"
#include "evk/image.hpp"

namespace evk {

struct RenderOptions {
  Vec3 light_dir{0, 0, -1};  // camera frame, pointing from the surface toward the light
  double near = 1e-3;        // triangles with a vertex closer than this are skipped
  double albedo = 204;
  double ambient = 0.15;
};

struct Render {
  Image image;                // white background
  std::vector<double> depth;  // camera Z per pixel, +inf where empty
};

/// Z-buffered flat Lambert shading (absolute cosine, so winding does not
/// matter). A pixel is covered when its center lies inside the projected
/// triangle; equal depths keep the earlier triangle.
Render rasterize(const TriMesh& mesh, const View& view, const RenderOptions& options = {});

/// 10 * log10(255^2 / MSE) over all channels, capped at 99 dB.
double psnr(const Image& a, const Image& b);

constexpr double kPsnrCap = 99.0;

/// Mean SSIM of the luma channel over every fully contained 11x11 Gaussian
/// window (sigma 1.5).
double ssim(const Image& a, const Image& b);

/// Produces unit-length embeddings. Implementations are deterministic and
/// safe for concurrent use.
class EmbedderPort {
 public:
  virtual ~EmbedderPort() = default;
  virtual std::vector<double> embed(const Image& image) const = 0;
  virtual std::string name() const = 0;
};

/// 32x32 grayscale box downsample, fixed Gaussian projection to 256 dims,
/// L2 normalization. A stand-in for a learned image embedder.
class ProxyEmbedder final : public EmbedderPort {
 public:
  static constexpr int kGrid = 32;
  static constexpr int kDims = 256;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed0e3bedULL;

  explicit ProxyEmbedder(std::uint64_t seed = kDefaultSeed);
  std::vector<double> embed(const Image& image) const override;
  std::string name() const override { return "proxy"; }

  /// Area-averaged grayscale grid in [0, 1], row-major kGrid x kGrid.
  static std::vector<double> downsample(const Image& image);

 private:
  std::vector<double> projection_;  // kDims x kGrid^2
};

/// Precomputed embeddings stored as EVK0 vectors at <dir>/<image_key>.evk.
class FileEmbedder final : public EmbedderPort {
 public:
  explicit FileEmbedder(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<double> embed(const Image& image) const override;
  std::string name() const override { return "file"; }

 private:
  std::filesystem::path dir_;
};

/// FNV-1a 64 over width, height and pixels, as 16 hex digits.
std::string image_key(const Image& image);

/// "proxy" or "file:<dir>".
std::unique_ptr<EmbedderPort> make_embedder(const std::string& spec);

/// Dot product of the two unit embeddings, in [-1, 1]. Throws
/// EmbedderFailure for empty, mismatched or non-unit embeddings.
double embed_cosine(const Image& a, const Image& b, const EmbedderPort& embedder);

using ImageSet = std::vector<Image>;

/// Mean embed_cosine over paired views. Throws SizeMismatch.
double mean_view_cosine(const ImageSet& a, const ImageSet& b, const EmbedderPort& embedder);

/// Indices of pairs whose mean view cosine is >= threshold.
std::vector<std::size_t> consistency_filter(const std::vector<std::pair<ImageSet, ImageSet>>& pairs,
                                            const EmbedderPort& embedder, double threshold);

struct Eval2DReport {
  int view_count = 0;
  double psnr = 0, ssim = 0, embed_cos = 0;
  std::vector<double> psnr_per_view, ssim_per_view, embed_per_view;
  std::string embed_label;  // "embed-I" for the proxy
  std::string embedder;
};

struct Eval2DOptions {
  int views = 10;
  double elevation_deg = 20;
  double radius = 2.5;
  double fov_deg = 50;
  int image_size = 256;
};

/// Renders both meshes (normalized with gt's unit-cube transform) from the
/// same ring of views and averages the per-view scores.
Eval2DReport eval_2d(const TriMesh& pred, const TriMesh& gt, const EmbedderPort& embedder,
                     const Eval2DOptions& options = {});

nlohmann::json to_json(const Eval2DReport& r);

namespace serial {
Render rasterize(const TriMesh& mesh, const View& view, const RenderOptions& options = {});
double ssim(const Image& a, const Image& b);
}  // namespace serial

}  // namespace evk
