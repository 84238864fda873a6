#include "evk/render2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "evk/camera.hpp"
#include "evk/error.hpp"
#include "evk/mesh.hpp"
#include "evk/reduce.hpp"
#include "evk/rng.hpp"
#include "evk/tensor.hpp"

namespace evk {

namespace {

struct ScreenTri {
  double u[3], v[3], z[3];
  double area;  // signed, twice the screen-space area
  int x0, x1, y0, y1;
  std::uint8_t shade;
};

std::vector<ScreenTri> project_triangles(const TriMesh& mesh, const View& view, const RenderOptions& opt) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) throw Error(ErrorKind::EmptyMesh, "nothing to render");
  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = view.to_camera(mesh.vertices[i]);
  const Vec3 light = normalized(opt.light_dir);

  std::vector<ScreenTri> out;
  out.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec3 a = cam[t[0]], b = cam[t[1]], c = cam[t[2]];
    if (a.z < opt.near || b.z < opt.near || c.z < opt.near) continue;
    ScreenTri s;
    const Vec3 p[3] = {a, b, c};
    for (int k = 0; k < 3; ++k) {
      s.u[k] = view.fx * p[k].x / p[k].z + view.cx;
      s.v[k] = view.fy * p[k].y / p[k].z + view.cy;
      s.z[k] = p[k].z;
    }
    s.area = (s.u[1] - s.u[0]) * (s.v[2] - s.v[0]) - (s.v[1] - s.v[0]) * (s.u[2] - s.u[0]);
    if (!(std::abs(s.area) > 1e-12)) continue;
    // pixel (i, j) has its center at (i + 0.5, j + 0.5)
    const double umin = std::min({s.u[0], s.u[1], s.u[2]}), umax = std::max({s.u[0], s.u[1], s.u[2]});
    const double vmin = std::min({s.v[0], s.v[1], s.v[2]}), vmax = std::max({s.v[0], s.v[1], s.v[2]});
    s.x0 = std::max(0, static_cast<int>(std::ceil(umin - 0.5)));
    s.x1 = std::min(view.width - 1, static_cast<int>(std::floor(umax - 0.5)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(vmin - 0.5)));
    s.y1 = std::min(view.height - 1, static_cast<int>(std::floor(vmax - 0.5)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    const Vec3 n = cross(b - a, c - a);
    const double len = norm(n);
    const double cosine = len > 0 ? std::min(1.0, std::abs(dot(n, light)) / len) : 0.0;
    const double value = opt.albedo * (opt.ambient + (1.0 - opt.ambient) * cosine);
    s.shade = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    out.push_back(s);
  }
  return out;
}

// Rasterizes rows [row0, row1). Each pixel sees the triangles in mesh order,
// so any split into row bands gives the same result.
void raster_rows(const std::vector<ScreenTri>& tris, int width, int row0, int row1, Render& r) {
  for (const ScreenTri& s : tris) {
    const int y0 = std::max(s.y0, row0), y1 = std::min(s.y1, row1 - 1);
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = s.x0; x <= s.x1; ++x) {
        const double px = x + 0.5;
        const double w0 = (s.u[2] - s.u[1]) * (py - s.v[1]) - (s.v[2] - s.v[1]) * (px - s.u[1]);
        const double w1 = (s.u[0] - s.u[2]) * (py - s.v[2]) - (s.v[0] - s.v[2]) * (px - s.u[2]);
        const double w2 = (s.u[1] - s.u[0]) * (py - s.v[0]) - (s.v[1] - s.v[0]) * (px - s.u[0]);
        const bool inside = s.area > 0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0) : (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (!inside) continue;
        const double inv_z = (w0 / s.area) / s.z[0] + (w1 / s.area) / s.z[1] + (w2 / s.area) / s.z[2];
        const double z = 1.0 / inv_z;
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        if (z < r.depth[idx]) {
          r.depth[idx] = z;
          std::uint8_t* p = &r.image.rgb[idx * 3];
          p[0] = p[1] = p[2] = s.shade;
        }
      }
    }
  }
}

Render blank(const View& view) {
  if (view.width < 1 || view.height < 1) throw Error(ErrorKind::InvalidArgument, "view has no pixels");
  Render r;
  r.image = Image(view.width, view.height, 255);
  r.depth.assign(static_cast<std::size_t>(view.width) * view.height, std::numeric_limits<double>::infinity());
  return r;
}

}  // namespace

Render rasterize(const TriMesh& mesh, const View& view, const RenderOptions& options) {
  const auto tris = project_triangles(mesh, view, options);
  Render r = blank(view);
  constexpr int kBand = 16;
  const int bands = (view.height + kBand - 1) / kBand;
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < bands; ++b)
    raster_rows(tris, view.width, b * kBand, std::min(view.height, (b + 1) * kBand), r);
  return r;
}

namespace serial {

Render rasterize(const TriMesh& mesh, const View& view, const RenderOptions& options) {
  const auto tris = project_triangles(mesh, view, options);
  Render r = blank(view);
  raster_rows(tris, view.width, 0, view.height, r);
  return r;
}

}  // namespace serial

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw Error(ErrorKind::SizeMismatch, "images differ in size");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.rgb.empty()) throw Error(ErrorKind::SizeMismatch, "empty images");
  std::vector<double> sq(a.rgb.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    sq[i] = d * d;
  }
  const double mse = pairwise_sum(sq) / static_cast<double>(sq.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

std::array<double, kWin> gaussian_kernel() {
  std::array<double, kWin> g{};
  double s = 0;
  for (int k = 0; k < kWin; ++k) {
    const double d = k - kWin / 2;
    g[k] = std::exp(-d * d / (2 * kSigma * kSigma));
    s += g[k];
  }
  for (auto& x : g) x /= s;
  return g;
}

double ssim_impl(const Image& a, const Image& b, bool parallel) {
  require_same_size(a, b);
  if (a.width < kWin || a.height < kWin) throw Error(ErrorKind::TooSmall, "ssim needs images of at least 11x11");
  const int W = a.width, H = a.height, OW = W - kWin + 1, OH = H - kWin + 1;
  const auto g = gaussian_kernel();

  std::vector<double> x(static_cast<std::size_t>(W) * H), y(x.size());
  for (int j = 0; j < H; ++j)
    for (int i = 0; i < W; ++i) {
      x[static_cast<std::size_t>(j) * W + i] = luma(a.pixel(i, j));
      y[static_cast<std::size_t>(j) * W + i] = luma(b.pixel(i, j));
    }

  // Horizontal pass: five moments per (row, output column).
  const std::size_t hsz = static_cast<std::size_t>(H) * OW;
  std::vector<double> hx(hsz), hy(hsz), hxx(hsz), hyy(hsz), hxy(hsz);
#pragma omp parallel for schedule(static) if (parallel)
  for (int j = 0; j < H; ++j)
    for (int i = 0; i < OW; ++i) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int k = 0; k < kWin; ++k) {
        const double xv = x[static_cast<std::size_t>(j) * W + i + k];
        const double yv = y[static_cast<std::size_t>(j) * W + i + k];
        sx += g[k] * xv;
        sy += g[k] * yv;
        sxx += g[k] * (xv * xv);
        syy += g[k] * (yv * yv);
        sxy += g[k] * (xv * yv);
      }
      const std::size_t o = static_cast<std::size_t>(j) * OW + i;
      hx[o] = sx;
      hy[o] = sy;
      hxx[o] = sxx;
      hyy[o] = syy;
      hxy[o] = sxy;
    }

  std::vector<double> map(static_cast<std::size_t>(OW) * OH);
#pragma omp parallel for schedule(static) if (parallel)
  for (int j = 0; j < OH; ++j)
    for (int i = 0; i < OW; ++i) {
      double mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
      for (int k = 0; k < kWin; ++k) {
        const std::size_t o = static_cast<std::size_t>(j + k) * OW + i;
        mx += g[k] * hx[o];
        my += g[k] * hy[o];
        exx += g[k] * hxx[o];
        eyy += g[k] * hyy[o];
        exy += g[k] * hxy[o];
      }
      const double vx = exx - mx * mx, vy = eyy - my * my, cxy = exy - mx * my;
      const double num = (2 * mx * my + kC1) * (2 * cxy + kC2);
      const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
      map[static_cast<std::size_t>(j) * OW + i] = num / den;
    }
  return pairwise_sum(map) / static_cast<double>(map.size());
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

namespace serial {
double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false); }
}  // namespace serial

ProxyEmbedder::ProxyEmbedder(std::uint64_t seed) {
  constexpr int in = kGrid * kGrid;
  projection_.resize(static_cast<std::size_t>(kDims) * in);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& p : projection_) p = scale * normal(rng);
}

std::vector<double> ProxyEmbedder::downsample(const Image& image) {
  if (image.width < 1 || image.height < 1) throw Error(ErrorKind::EmbedderFailure, "cannot embed an empty image");
  // Fractional-overlap weights of source pixels for each grid cell, per axis.
  auto weights = [](int src) {
    std::vector<std::vector<std::pair<int, double>>> w(kGrid);
    const double step = static_cast<double>(src) / kGrid;
    for (int c = 0; c < kGrid; ++c) {
      const double lo = c * step, hi = (c + 1) * step;
      for (int s = static_cast<int>(std::floor(lo)); s < src && s < hi; ++s) {
        const double ov = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (ov > 0) w[c].push_back({s, ov / step});
      }
    }
    return w;
  };
  const auto wx = weights(image.width), wy = weights(image.height);
  std::vector<double> grid(static_cast<std::size_t>(kGrid) * kGrid, 0.0);
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx) {
      double s = 0;
      for (const auto& [sy, fy] : wy[gy])
        for (const auto& [sx, fx] : wx[gx]) s += fy * fx * luma(image.pixel(sx, sy));
      grid[static_cast<std::size_t>(gy) * kGrid + gx] = s / 255.0;
    }
  return grid;
}

namespace {

std::vector<double> unit(std::vector<double> v, const char* who) {
  double s = 0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (!(n > 0) || !std::isfinite(n)) throw Error(ErrorKind::EmbedderFailure, std::string(who) + ": zero or non-finite embedding");
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

std::vector<double> ProxyEmbedder::embed(const Image& image) const {
  const std::vector<double> g = downsample(image);
  const std::size_t in = g.size();
  std::vector<double> e(kDims, 0.0);
  for (int k = 0; k < kDims; ++k) {
    double s = 0;
    const double* row = &projection_[static_cast<std::size_t>(k) * in];
    for (std::size_t j = 0; j < in; ++j) s += row[j] * (g[j] - 0.5);
    e[k] = s;
  }
  return unit(std::move(e), "proxy embedder");
}

std::string image_key(const Image& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int v : {image.width, image.height})
    for (int k = 0; k < 4; ++k) eat(static_cast<std::uint8_t>((static_cast<std::uint32_t>(v) >> (8 * k)) & 0xff));
  for (std::uint8_t b : image.rgb) eat(b);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> FileEmbedder::embed(const Image& image) const {
  const auto path = dir_ / (image_key(image) + ".evk");
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::EmbedderFailure, "no stored embedding at " + path.string());
  TensorBlob blob;
  try {
    blob = read_tensor(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::EmbedderFailure, std::string("stored embedding unreadable: ") + e.what());
  }
  return unit(std::vector<double>(blob.data.begin(), blob.data.end()), "file embedder");
}

std::unique_ptr<EmbedderPort> make_embedder(const std::string& spec) {
  if (spec == "proxy") return std::make_unique<ProxyEmbedder>();
  if (spec.rfind("file:", 0) == 0) return std::make_unique<FileEmbedder>(spec.substr(5));
  throw Error(ErrorKind::InvalidArgument, "unknown embedder '" + spec + "' (proxy, file:<dir>)");
}

double embed_cosine(const Image& a, const Image& b, const EmbedderPort& embedder) {
  const auto ea = embedder.embed(a), eb = embedder.embed(b);
  if (ea.empty() || ea.size() != eb.size())
    throw Error(ErrorKind::EmbedderFailure, embedder.name() + ": embeddings are empty or differ in width");
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    d += ea[i] * eb[i];
    na += ea[i] * ea[i];
    nb += eb[i] * eb[i];
  }
  if (!std::isfinite(d) || std::abs(std::sqrt(na) - 1) > 1e-6 || std::abs(std::sqrt(nb) - 1) > 1e-6)
    throw Error(ErrorKind::EmbedderFailure, embedder.name() + ": embedding is not unit length");
  return std::clamp(d, -1.0, 1.0);
}

double mean_view_cosine(const ImageSet& a, const ImageSet& b, const EmbedderPort& embedder) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorKind::SizeMismatch, "image sets differ in view count");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = embed_cosine(a[i], b[i], embedder);
  return pairwise_sum(c) / static_cast<double>(c.size());
}

std::vector<std::size_t> consistency_filter(const std::vector<std::pair<ImageSet, ImageSet>>& pairs,
                                            const EmbedderPort& embedder, double threshold) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (mean_view_cosine(pairs[i].first, pairs[i].second, embedder) >= threshold) kept.push_back(i);
  return kept;
}

Eval2DReport eval_2d(const TriMesh& pred, const TriMesh& gt, const EmbedderPort& embedder,
                     const Eval2DOptions& options) {
  if (options.views < 1) throw Error(ErrorKind::InvalidArgument, "need at least one view");
  const UnitCubeTransform tf = unit_cube_transform(gt);
  const TriMesh p = apply_transform(pred, tf), g = apply_transform(gt, tf);
  const auto views =
      ring_views(options.views, options.elevation_deg, options.radius, options.fov_deg, options.image_size);
  Eval2DReport r;
  r.view_count = options.views;
  r.embedder = embedder.name();
  r.embed_label = embedder.name() == "file" ? "DINO-I" : "embed-I";
  for (const View& v : views) {
    const Image a = rasterize(p, v).image, b = rasterize(g, v).image;
    r.psnr_per_view.push_back(psnr(a, b));
    r.ssim_per_view.push_back(ssim(a, b));
    r.embed_per_view.push_back(embed_cosine(a, b, embedder));
  }
  auto mean = [](const std::vector<double>& v) { return pairwise_sum(v) / static_cast<double>(v.size()); };
  r.psnr = mean(r.psnr_per_view);
  r.ssim = mean(r.ssim_per_view);
  r.embed_cos = mean(r.embed_per_view);
  return r;
}

nlohmann::json to_json(const Eval2DReport& r) {
  nlohmann::json j;
  j["view_count"] = r.view_count;
  j["psnr"] = r.psnr;
  j["ssim"] = r.ssim;
  j[r.embed_label] = r.embed_cos;
  j["embedder"] = r.embedder;
  j["lpips"] = nullptr;
  j["per_view"] = {{"psnr", r.psnr_per_view}, {"ssim", r.ssim_per_view}, {r.embed_label, r.embed_per_view}};
  return j;
}

}  // namespace evk
