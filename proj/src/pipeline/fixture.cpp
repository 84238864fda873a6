#include <cstdio>
#include <fstream>

#include "evk/camera.hpp"
#include "evk/error.hpp"
#include "evk/image.hpp"
#include "evk/maskvote.hpp"
#include "evk/pipeline.hpp"
#include "evk/repaint.hpp"
#include "evk/rng.hpp"
#include "evk/tensor.hpp"

namespace fs = std::filesystem;

namespace evk {

namespace {

struct Box {
  int lo[3], hi[3];  // half-open cell ranges
  bool contains(int x, int y, int z) const {
    return x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
  }
};

Box random_box(Rng& rng, int r, int min_size, int max_size, int margin) {
  Box b;
  for (int a = 0; a < 3; ++a) {
    const int size = min_size + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_size - min_size + 1)));
    const int span = r - 2 * margin - size;
    const int start = margin + (span > 0 ? static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span + 1))) : 0);
    b.lo[a] = start;
    b.hi[a] = std::min(r - margin, start + size);
  }
  return b;
}

}  // namespace

void write_fixture(const fs::path& dir, const FixtureOptions& o) {
  if (o.samples < 1 || o.resolution < 8 || o.views < 1 || o.channels < 1 || o.image_size < 11)
    throw Error(ErrorKind::InvalidArgument, "fixture options out of range");
  const int r = o.resolution;
  const VoxelDomain dom(r, Bounds{});
  const auto views = ring_views(o.views, 20.0, 2.5, 50.0, o.image_size);

  for (int s = 0; s < o.samples; ++s) {
    Rng rng(derive_seed(o.seed, static_cast<std::uint64_t>(s)));
    char id[32];
    std::snprintf(id, sizeof id, "s%03d", s);
    const fs::path sd = dir / "samples" / id;
    fs::create_directories(sd / "masks");
    fs::create_directories(sd / "latents");

    // Source: union of two boxes. Edit: inside region E the geometry is
    // replaced by a different box, clipped to E.
    const Box a = random_box(rng, r, r / 4, r / 2, r / 8);
    const Box b = random_box(rng, r, r / 4, r / 2, r / 8);
    const Box e = random_box(rng, r, r / 4, r / 3, r / 8);
    const Box n = random_box(rng, r, r / 6, r / 3, r / 8);

    VoxelGrid src(dom), tgt(dom), region(dom);
    for (int x = 0; x < r; ++x)
      for (int y = 0; y < r; ++y)
        for (int z = 0; z < r; ++z) {
          const bool s_occ = a.contains(x, y, z) || b.contains(x, y, z);
          const bool in_e = e.contains(x, y, z);
          const bool t_occ = in_e ? n.contains(x, y, z) : s_occ;
          src.set(x, y, z, s_occ);
          tgt.set(x, y, z, t_occ);
          region.set(x, y, z, in_e && (s_occ || t_occ));
        }
    VoxelGrid domain(dom);
    for (std::size_t i = 0; i < domain.bits.size(); ++i) domain.bits[i] = src.bits[i] | tgt.bits[i];
    write_grid(sd / "grid.evk", domain);
    write_views_json(sd / "views.json", views);
    for (std::size_t v = 0; v < views.size(); ++v) {
      char name[32];
      std::snprintf(name, sizeof name, "%03zu.png", v);
      const Mask2D m = region.count() ? render_silhouette(region, views[v]) : Mask2D(views[v].width, views[v].height);
      write_mask_png(sd / "masks" / name, m);
    }

    Latent zs(o.channels, r), zt(o.channels, r);
    for (std::size_t i = 0; i < zs.cells(); ++i) {
      zs.at(0, i) = src.bits[i] ? 1.0f : -1.0f;
      zt.at(0, i) = tgt.bits[i] ? 1.0f : -1.0f;
      const CellIndex ci = dom.cell(i);
      const bool in_e = e.contains(ci.x, ci.y, ci.z);
      for (int c = 1; c < o.channels; ++c) {
        zs.at(c, i) = static_cast<float>(normal(rng));
        zt.at(c, i) = in_e ? static_cast<float>(normal(rng)) : zs.at(c, i);
      }
    }
    write_tensor(sd / "latents" / "src.evk", zs.to_tensor());
    write_tensor(sd / "latents" / "tgt.evk", zt.to_tensor());
    std::ofstream(sd / "prompt.txt") << "synthetic edit " << id << "\n";
  }

  RunConfig cfg;
  cfg.n_views = o.views;
  cfg.consistency_views = 6;
  cfg.render_size = 64;
  cfg.repaint_steps = 25;
  cfg.seed = o.seed;
  std::ofstream(dir / "config.json") << cfg.to_json().dump(2) << "\n";
}

}  // namespace evk
