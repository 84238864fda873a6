// Command-line front end. Reports go to stdout as JSON unless --out is given.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "evk/camera.hpp"
#include "evk/dedup.hpp"
#include "evk/editformer_check.hpp"
#include "evk/error.hpp"
#include "evk/image.hpp"
#include "evk/maskvote.hpp"
#include "evk/mesh.hpp"
#include "evk/metrics3d.hpp"
#include "evk/pipeline.hpp"
#include "evk/render2d.hpp"
#include "evk/repaint.hpp"
#include "evk/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw evk::Error(evk::ErrorKind::IoError, "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw evk::Error(evk::ErrorKind::ParseError, p.string() + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  f << j.dump(2) << "\n";
  if (!f) throw evk::Error(evk::ErrorKind::IoError, "cannot write " + out);
}

std::vector<evk::Mask2D> read_mask_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw evk::Error(evk::ErrorKind::MissingArtifact, "no mask directory at " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<evk::Mask2D> masks;
  for (const auto& f : files) masks.push_back(evk::read_mask_png(f));
  return masks;
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw evk::Error(evk::ErrorKind::ParseError, what + " must be a JSON array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw evk::Error(evk::ErrorKind::ParseError, what + " must be a JSON array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evk: 3D edit dataset and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { g.seed = s; }, "random seed");
  int exit_code = 0;

  // maskvote
  std::string mv_grid, mv_views, mv_masks, mv_out;
  double mv_tau = 0.5;
  auto* mv = app.add_subcommand("maskvote", "vote 2D masks into a 3D edit mask");
  mv->add_option("--grid", mv_grid, "occupancy grid (.evk)")->required();
  mv->add_option("--views", mv_views, "views.json")->required();
  mv->add_option("--masks", mv_masks, "directory of mask PNGs, sorted by name")->required();
  mv->add_option("--tau", mv_tau, "fraction of views");
  mv->add_option("--out", mv_out, "output mask (.evk)")->required();
  mv->callback([&] {
    const auto grid = evk::read_grid(mv_grid);
    const auto views = evk::read_views_json(mv_views);
    const auto masks = read_mask_dir(mv_masks);
    const auto counts = evk::vote(grid, views, masks);
    const auto mask = evk::threshold_mask(counts, {mv_tau, static_cast<int>(views.size())});
    evk::write_grid(mv_out, mask);
    emit({{"views", views.size()}, {"tau", mv_tau}, {"threshold", evk::vote_threshold({mv_tau, (int)views.size()})},
          {"mask_voxels", mask.count()}},
         "");
  });

  // repaint
  std::string rp_src, rp_mask, rp_denoiser, rp_out;
  int rp_steps = 25;
  bool rp_fresh = false;
  auto* rp = app.add_subcommand("repaint", "mask-guided latent repainting");
  rp->add_option("--src", rp_src, "source latent (.evk)")->required();
  rp->add_option("--mask", rp_mask, "3D mask (.evk)")->required();
  rp->add_option("--steps", rp_steps, "sampler steps")->check(CLI::PositiveNumber);
  rp->add_option("--denoiser", rp_denoiser, "zero | identity | linear:<file>")->required();
  rp->add_flag("--fresh-noise", rp_fresh, "draw fresh source noise at every step");
  rp->add_option("--out", rp_out, "output latent (.evk)")->required();
  rp->callback([&] {
    const auto src = evk::Latent::from_tensor(evk::read_tensor(rp_src));
    const auto mask = evk::read_grid(rp_mask);
    const auto den = evk::make_denoiser(rp_denoiser);
    evk::RepaintOptions opt;
    if (rp_fresh) opt.source_noise = evk::SourceNoise::FreshGaussian;
    const auto r = evk::repaint_run(*den, src, mask, evk::Schedule::linear(rp_steps), {}, g.seed.value_or(0), opt);
    evk::write_tensor(rp_out, r.output.to_tensor());
    emit({{"denoiser", den->name()}, {"steps", rp_steps}, {"seed", g.seed.value_or(0)}, {"mask_voxels", mask.count()}},
         "");
  });

  // metrics3d
  std::string m3_pred, m3_gt, m3_out;
  evk::Eval3DOptions m3_opt;
  auto* m3 = app.add_subcommand("metrics3d", "Chamfer distance, normal consistency and F1");
  m3->add_option("--pred", m3_pred, "predicted mesh (OBJ/PLY)")->required();
  m3->add_option("--gt", m3_gt, "reference mesh (OBJ/PLY)")->required();
  m3->add_option("--samples", m3_opt.samples, "surface samples per mesh");
  m3->add_option("--threshold", m3_opt.threshold, "F1 distance threshold");
  m3->add_option("--out", m3_out, "report JSON");
  m3->callback([&] {
    const auto pred = evk::load_mesh(m3_pred).mesh;
    const auto gt = evk::load_mesh(m3_gt).mesh;
    emit(evk::to_json(evk::eval_3d(pred, gt, g.seed.value_or(0), m3_opt)), m3_out);
  });

  // metrics2d
  std::string m2_pred, m2_gt, m2_out, m2_embedder = "proxy";
  evk::Eval2DOptions m2_opt;
  auto* m2 = app.add_subcommand("metrics2d", "PSNR, SSIM and embedding similarity over rendered views");
  m2->add_option("--pred", m2_pred, "predicted mesh (OBJ/PLY)")->required();
  m2->add_option("--gt", m2_gt, "reference mesh (OBJ/PLY)")->required();
  m2->add_option("--views", m2_opt.views, "ring views")->check(CLI::PositiveNumber);
  m2->add_option("--size", m2_opt.image_size, "image size in pixels")->check(CLI::PositiveNumber);
  m2->add_option("--embedder", m2_embedder, "proxy | file:<dir>");
  m2->add_option("--out", m2_out, "report JSON");
  m2->callback([&] {
    const auto pred = evk::load_mesh(m2_pred).mesh;
    const auto gt = evk::load_mesh(m2_gt).mesh;
    const auto emb = evk::make_embedder(m2_embedder);
    emit(evk::to_json(evk::eval_2d(pred, gt, *emb, m2_opt)), m2_out);
  });

  // dedup
  std::string dd_emb, dd_ids, dd_out;
  double dd_threshold = 0.9;
  bool dd_normalize = false;
  auto* dd = app.add_subcommand("dedup", "greedy cosine-similarity pruning");
  dd->add_option("--embeddings", dd_emb, "[N, W] tensor (.evk)")->required();
  dd->add_option("--ids", dd_ids, "JSON array of N ids")->required();
  dd->add_option("--threshold", dd_threshold, "prune at cosine >= threshold");
  dd->add_flag("--normalize", dd_normalize, "rescale rows to unit length");
  dd->add_option("--out", dd_out, "kept ids JSON");
  dd->callback([&] {
    const auto t = evk::read_tensor(dd_emb);
    if (t.dims.size() != 2) throw evk::Error(evk::ErrorKind::DimMismatch, "embeddings must be [N, W]");
    auto ids = string_list(read_json(dd_ids), "ids");
    if (ids.size() != t.dims[0]) throw evk::Error(evk::ErrorKind::WidthMismatch, "ids and embedding rows differ in count");
    std::vector<std::vector<double>> rows(t.dims[0]);
    for (std::size_t i = 0; i < rows.size(); ++i)
      rows[i].assign(t.data.begin() + i * t.dims[1], t.data.begin() + (i + 1) * t.dims[1]);
    const auto set = evk::EmbeddingSet::from_rows(std::move(ids), rows, dd_normalize);
    const auto kept = evk::greedy_prune(set, dd_threshold);
    emit({{"threshold", dd_threshold}, {"input", set.size()}, {"kept_count", kept.size()}, {"kept", kept}}, dd_out);
  });

  // assemble
  std::string as_chars, as_poses, as_out;
  std::size_t as_k = 500;
  auto* as = app.add_subcommand("assemble", "sample poses per character and pair them");
  as->add_option("--characters", as_chars, "JSON array of character ids")->required();
  as->add_option("--poses", as_poses, "JSON array of pose ids")->required();
  as->add_option("--k", as_k, "poses per character");
  as->add_option("--out", as_out, "manifest JSON");
  as->callback([&] {
    const auto chars = string_list(read_json(as_chars), "characters");
    const auto poses = string_list(read_json(as_poses), "poses");
    emit(evk::to_json(evk::assemble_pairs(chars, poses, as_k, g.seed.value_or(0))), as_out);
  });

  // editformer check
  auto* ef = app.add_subcommand("editformer", "toy dual-guidance transformer");
  ef->require_subcommand(1);
  std::string ef_out;
  int ef_steps = 200;
  auto* efc = ef->add_subcommand("check", "gate-zero identity, gradient check and overfitting run");
  efc->add_option("--steps", ef_steps, "training steps for the overfitting run")->check(CLI::PositiveNumber);
  efc->add_option("--out", ef_out, "report JSON");
  efc->callback([&] {
    evk::editformer::CheckOptions opt;
    if (!g.config.empty()) opt.config = evk::editformer::config_from_json(read_json(g.config));
    if (g.seed) opt.seed = *g.seed;
    opt.overfit_steps = ef_steps;
    const auto r = evk::editformer::run_checks(opt);
    json j = evk::editformer::to_json(r);
    j["config"] = evk::editformer::to_json(opt.config);
    emit(j, ef_out);
    if (!r.all_pass()) exit_code = 1;
  });

  // pipeline run
  auto* pl = app.add_subcommand("pipeline", "dataset factory over a sample directory");
  pl->require_subcommand(1);
  std::string pl_in, pl_out;
  auto* plr = pl->add_subcommand("run", "maskvote -> repaint -> consistency for every sample");
  plr->add_option("input", pl_in, "input directory containing samples/")->required();
  plr->add_option("--out", pl_out, "output directory (default <input>/out)");
  plr->callback([&] {
    evk::RunConfig cfg;
    fs::path cfg_path = g.config;
    if (cfg_path.empty() && fs::exists(fs::path(pl_in) / "config.json")) cfg_path = fs::path(pl_in) / "config.json";
    if (!cfg_path.empty()) cfg = evk::RunConfig::from_json(read_json(cfg_path));
    if (g.seed) cfg.seed = *g.seed;
    const fs::path out = pl_out.empty() ? fs::path(pl_in) / "out" : fs::path(pl_out);
    const auto rep = evk::run_pipeline(cfg, pl_in, out, g.jobs);
    std::printf("samples %zu: accepted %zu, rejected %zu, failed %zu; stages executed %d, cached %d\n",
                rep.samples.size(), rep.count(evk::SampleStatus::Accepted), rep.count(evk::SampleStatus::Rejected),
                rep.count(evk::SampleStatus::Failed), rep.executed, rep.cached);
    for (const auto& o : rep.samples)
      if (o.status == evk::SampleStatus::Failed) std::fprintf(stderr, "%s\n", o.message.c_str());
    std::printf("report: %s\n", (out / "report.json").string().c_str());
    if (rep.count(evk::SampleStatus::Failed)) exit_code = 1;
  });

  // robustness
  std::string rb_mask, rb_out;
  std::vector<double> rb_percents{0, 9, 18, 27};
  auto* rb = app.add_subcommand("robustness", "IoU of dilated masks against the original");
  rb->add_option("--mask", rb_mask, "3D mask (.evk)")->required();
  rb->add_option("--percents", rb_percents, "dilation percents of the bounding-sphere radius")->delimiter(',');
  rb->add_option("--out", rb_out, "table JSON");
  rb->callback([&] {
    json rows = json::array();
    for (const auto& r : evk::robustness_study(evk::read_grid(rb_mask), rb_percents))
      rows.push_back({{"percent", r.percent}, {"count", r.count}, {"iou", r.iou}});
    emit(rows, rb_out);
  });

  // report
  std::string rt_dir, rt_baseline, rt_out;
  auto* rt = app.add_subcommand("report", "aggregate per-method metric reports");
  rt->add_option("dir", rt_dir, "directory of report JSON files")->required();
  rt->add_option("--baseline", rt_baseline, "method used as the improvement reference");
  rt->add_option("--out", rt_out, "table JSON");
  rt->callback([&] {
    const auto t = evk::report_tables(fs::path(rt_dir), rt_baseline);
    std::cout << t.to_text();
    if (!rt_out.empty()) emit(t.to_json(), rt_out);
  });

  // fixture
  std::string fx_dir;
  evk::FixtureOptions fx;
  auto* fxc = app.add_subcommand("fixture", "write a synthetic pipeline input directory");
  fxc->add_option("dir", fx_dir, "target directory")->required();
  fxc->add_option("--samples", fx.samples, "sample count")->check(CLI::PositiveNumber);
  fxc->add_option("--resolution", fx.resolution, "voxel resolution");
  fxc->add_option("--views", fx.views, "views per sample")->check(CLI::PositiveNumber);
  fxc->callback([&] {
    if (g.seed) fx.seed = *g.seed;
    evk::write_fixture(fx_dir, fx);
    std::printf("wrote %d samples to %s\n", fx.samples, fx_dir.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const evk::Error& e) {
    std::fprintf(stderr, "evk: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "evk: %s\n", e.what());
    return 2;
  }
  return exit_code;
}
