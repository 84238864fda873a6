#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "evk/camera.hpp"
#include "evk/error.hpp"
#include "evk/image.hpp"
#include "evk/maskvote.hpp"
#include "evk/mesh.hpp"
#include "evk/pipeline.hpp"
#include "evk/render2d.hpp"
#include "evk/repaint.hpp"
#include "evk/rng.hpp"
#include "evk/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evk {

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

std::string to_string(SampleStatus s) {
  switch (s) {
    case SampleStatus::Accepted: return "accepted";
    case SampleStatus::Rejected: return "rejected";
    case SampleStatus::Failed: return "failed";
  }
  return "?";
}

SampleManifest SampleManifest::scan(const fs::path& sample_dir) {
  SampleManifest m;
  m.id = sample_dir.filename().string();
  m.dir = sample_dir;
  m.grid = sample_dir / "grid.evk";
  m.views = sample_dir / "views.json";
  m.masks_dir = sample_dir / "masks";
  m.src_latent = sample_dir / "latents" / "src.evk";
  m.tgt_latent = sample_dir / "latents" / "tgt.evk";
  std::error_code ec;
  if (fs::is_directory(m.masks_dir, ec)) {
    for (const auto& e : fs::directory_iterator(m.masks_dir))
      if (e.is_regular_file() && e.path().extension() == ".png") m.mask_files.push_back(e.path());
    std::sort(m.mask_files.begin(), m.mask_files.end());
  }
  for (const char* rel : {"images/src.png", "images/tgt.png", "prompt.txt", "boxes.json"})
    if (fs::exists(sample_dir / rel, ec)) m.extras[rel] = sample_dir / rel;
  return m;
}

std::vector<std::string> SampleManifest::missing_for(const std::string& stage_name) const {
  std::vector<std::string> missing;
  auto need = [&](const fs::path& p, const char* rel) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) missing.emplace_back(rel);
  };
  if (stage_name == stage::kMaskVote) {
    need(grid, "grid.evk");
    need(views, "views.json");
    if (mask_files.empty()) missing.emplace_back("masks/*.png");
  } else if (stage_name == stage::kRepaint) {
    need(src_latent, "latents/src.evk");
    need(tgt_latent, "latents/tgt.evk");
  } else if (stage_name == stage::kConsistency) {
    need(tgt_latent, "latents/tgt.evk");
  }
  return missing;
}

std::size_t RunReport::count(SampleStatus s) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [s](const SampleOutcome& o) { return o.status == s; }));
}

namespace {

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{stage::kMaskVote, stage::kRepaint, stage::kConsistency};
  return order;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Leaves the file untouched (mtime included) when the content is unchanged.
void write_if_changed(const fs::path& p, const std::string& content) {
  std::error_code ec;
  if (fs::is_regular_file(p, ec)) {
    std::ifstream in(p, std::ios::binary);
    const std::string old{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (old == content) return;
  }
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Order-sensitive digest of named files plus a parameter blob.
class Fingerprint {
 public:
  Fingerprint& file(const std::string& name, const fs::path& p) {
    h_ = fnv1a(name, h_);
    const std::string bytes = read_bytes(p);
    const std::uint64_t n = bytes.size();
    h_ = fnv1a(&n, sizeof n, h_);
    h_ = fnv1a(bytes, h_);
    return *this;
  }
  Fingerprint& params(const json& j) {
    h_ = fnv1a(j.dump(), h_);
    return *this;
  }
  std::string hex() const { return hex64(h_); }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct SampleJob {
  const RunConfig& config;
  SampleManifest manifest;
  fs::path out;  // <out>/samples/<id>
  json status;
  SampleOutcome outcome;

  json& stage_entry(const std::string& s) { return status["stages"][s]; }

  bool cached(const std::string& s, const std::string& fp, std::initializer_list<const char*> outputs) {
    const json& e = status["stages"][s];
    if (!e.is_object() || e.value("state", "") != "done" || e.value("fingerprint", "") != fp) return false;
    std::error_code ec;
    for (const char* o : outputs)
      if (!fs::is_regular_file(out / o, ec)) return false;
    return true;
  }

  void mark_done(const std::string& s, const std::string& fp, json result) {
    stage_entry(s) = {{"state", "done"}, {"fingerprint", fp}, {"result", std::move(result)}};
  }

  void run_maskvote() {
    const std::string s = stage::kMaskVote;
    Fingerprint f;
    f.file("grid", manifest.grid).file("views", manifest.views);
    for (const auto& m : manifest.mask_files) f.file("mask:" + m.filename().string(), m);
    f.params({{"tau", config.tau}, {"n_views", config.n_views}});
    const std::string fp = f.hex();
    if (cached(s, fp, {"mask.evk"})) {
      ++outcome.cached;
      outcome.mask_voxels = stage_entry(s)["result"].at("voxels").get<std::size_t>();
      return;
    }
    const VoxelGrid domain = read_grid(manifest.grid);
    const auto views = read_views_json(manifest.views);
    if (static_cast<int>(views.size()) != config.n_views)
      throw Error(ErrorKind::SizeMismatch, "views.json has " + std::to_string(views.size()) + " views, config n_views is " +
                                               std::to_string(config.n_views));
    if (manifest.mask_files.size() != views.size())
      throw Error(ErrorKind::SizeMismatch, std::to_string(manifest.mask_files.size()) + " masks for " +
                                               std::to_string(views.size()) + " views");
    std::vector<Mask2D> masks;
    masks.reserve(views.size());
    for (const auto& m : manifest.mask_files) masks.push_back(read_mask_png(m));
    const CountGrid counts = vote(domain, views, masks);
    const VoxelGrid mask = threshold_mask(counts, {config.tau, config.n_views});
    write_grid(out / "mask.evk", mask);
    outcome.mask_voxels = mask.count();
    mark_done(s, fp, {{"voxels", mask.count()}});
    ++outcome.executed;
  }

  void run_repaint() {
    const std::string s = stage::kRepaint;
    const std::uint64_t seed = derive_seed(config.seed, fnv1a(manifest.id));
    const std::string fp = Fingerprint()
                               .file("mask", out / "mask.evk")
                               .file("src", manifest.src_latent)
                               .file("tgt", manifest.tgt_latent)
                               .params({{"seed", seed}, {"steps", config.repaint_steps}})
                               .hex();
    if (cached(s, fp, {"edit.evk"})) {
      ++outcome.cached;
      return;
    }
    const VoxelGrid mask = read_grid(out / "mask.evk");
    const Latent src = Latent::from_tensor(read_tensor(manifest.src_latent));
    Latent tgt = Latent::from_tensor(read_tensor(manifest.tgt_latent));
    if (!src.same_shape(tgt)) throw Error(ErrorKind::DimMismatch, "source and target latents differ in shape");
    const LinearDenoiser denoiser(std::move(tgt));
    const RepaintResult r = repaint_run(denoiser, src, mask, Schedule::linear(config.repaint_steps), {}, seed);
    write_tensor(out / "edit.evk", r.output.to_tensor());
    mark_done(s, fp, {{"seed", seed}});
    ++outcome.executed;
  }

  ImageSet render_latent(const Latent& z, const std::vector<View>& views) const {
    VoxelGrid occ(VoxelDomain(z.resolution, Bounds{}));
    for (std::size_t i = 0; i < occ.bits.size(); ++i) occ.bits[i] = z.at(0, i) > 0.0f ? 1 : 0;
    ImageSet images;
    if (occ.count() == 0) {
      for (const auto& v : views) images.emplace_back(v.width, v.height, 255);
      return images;
    }
    const TriMesh mesh = voxel_surface_mesh(occ);
    for (const auto& v : views) images.push_back(rasterize(mesh, v).image);
    return images;
  }

  void run_consistency() {
    const std::string s = stage::kConsistency;
    const std::string fp = Fingerprint()
                               .file("edit", out / "edit.evk")
                               .file("tgt", manifest.tgt_latent)
                               .params({{"views", config.consistency_views},
                                        {"render_size", config.render_size},
                                        {"embedder", config.embedder}})
                               .hex();
    if (cached(s, fp, {"consistency.json"})) {
      ++outcome.cached;
      outcome.consistency = stage_entry(s)["result"].at("score").get<double>();
      return;
    }
    const Latent edit = Latent::from_tensor(read_tensor(out / "edit.evk"));
    const Latent tgt = Latent::from_tensor(read_tensor(manifest.tgt_latent));
    if (!edit.same_shape(tgt)) throw Error(ErrorKind::DimMismatch, "edited and target latents differ in shape");
    const auto views = ring_views(config.consistency_views, 20.0, 2.5, 50.0, config.render_size);
    const auto embedder = make_embedder(config.embedder);
    const double score = mean_view_cosine(render_latent(edit, views), render_latent(tgt, views), *embedder);
    write_if_changed(out / "consistency.json",
                     json{{"score", score}, {"views", config.consistency_views}, {"embedder", config.embedder}}.dump(2) +
                         "\n");
    outcome.consistency = score;
    mark_done(s, fp, {{"score", score}});
    ++outcome.executed;
  }

  void run() {
    outcome.id = manifest.id;
    std::string current;
    try {
      for (const auto& s : stage_order()) {
        current = s;
        const auto missing = manifest.missing_for(s);
        if (!missing.empty()) {
          std::string list;
          for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
          throw Error(ErrorKind::MissingArtifact, "sample '" + manifest.id + "', stage " + s + ": missing " + list);
        }
        if (s == stage::kMaskVote) run_maskvote();
        if (s == stage::kRepaint) run_repaint();
        if (s == stage::kConsistency) run_consistency();
        outcome.stages[s] = "done";
      }
      const bool keep = *outcome.consistency >= config.consistency_threshold;
      outcome.status = keep ? SampleStatus::Accepted : SampleStatus::Rejected;
      if (!keep) outcome.reason = "consistency";
    } catch (const std::exception& e) {
      const auto* err = dynamic_cast<const Error*>(&e);
      const bool missing = err && err->kind() == ErrorKind::MissingArtifact;
      outcome.status = SampleStatus::Failed;
      outcome.failed_stage = current;
      outcome.reason = missing ? "MissingArtifact" : "StageFailure";
      outcome.message = missing ? e.what()
                                : std::string(to_string(ErrorKind::StageFailure)) + ": sample '" + manifest.id +
                                      "', stage " + current + ": " + e.what();
      bool after = false;
      for (const auto& s : stage_order()) {
        if (s == current) {
          after = true;
          outcome.stages[s] = "failed";
          stage_entry(s) = {{"state", "failed"}, {"error", outcome.reason}, {"message", outcome.message}};
        } else if (after) {
          outcome.stages[s] = "blocked";
          stage_entry(s) = {{"state", "blocked"}};
        }
      }
    }
  }
};

json load_status(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return json::object();
  try {
    json j = json::parse(read_bytes(p));
    return j.is_object() ? j : json::object();
  } catch (const std::exception&) {
    return json::object();  // unreadable status only costs a recompute
  }
}

json manifest_json(const SampleManifest& m, const fs::path& input_dir) {
  auto rel = [&](const fs::path& p) { return fs::relative(p, input_dir).generic_string(); };
  json masks = json::array();
  for (const auto& p : m.mask_files) masks.push_back(rel(p));
  json extras = json::object();
  for (const auto& [k, p] : m.extras) extras[k] = rel(p);
  return {{"grid", rel(m.grid)},       {"views", rel(m.views)},           {"masks", masks},
          {"src_latent", rel(m.src_latent)}, {"tgt_latent", rel(m.tgt_latent)}, {"extras", extras}};
}

}  // namespace

json RunReport::to_json(const RunConfig& config) const {
  json samples_j = json::array(), rejected = json::array(), failed = json::array(), accepted = json::array();
  json stage_counts = json::object();
  for (const auto& s : stage_order()) stage_counts[s] = {{"done", 0}, {"failed", 0}, {"blocked", 0}};
  for (const auto& o : samples) {
    json e{{"id", o.id}, {"status", to_string(o.status)}, {"stages", o.stages}};
    if (o.mask_voxels) e["mask_voxels"] = *o.mask_voxels;
    if (o.consistency) e["consistency"] = *o.consistency;
    if (!o.reason.empty()) e["reason"] = o.reason;
    if (!o.failed_stage.empty()) e["failed_stage"] = o.failed_stage;
    if (!o.message.empty()) e["message"] = o.message;
    samples_j.push_back(e);
    for (const auto& [s, st] : o.stages) stage_counts[s][st] = stage_counts[s][st].get<int>() + 1;
    if (o.status == SampleStatus::Accepted) accepted.push_back(o.id);
    if (o.status == SampleStatus::Rejected) rejected.push_back({{"id", o.id}, {"reason", o.reason}});
    if (o.status == SampleStatus::Failed)
      failed.push_back({{"id", o.id}, {"error", o.reason}, {"stage", o.failed_stage}});
  }
  return {{"config", config.to_json()},
          {"sample_count", samples.size()},
          {"stage_counts", stage_counts},
          {"accepted", accepted},
          {"rejected", rejected},
          {"failed", failed},
          {"samples", samples_j}};
}

RunReport run_pipeline(const RunConfig& config, const fs::path& input_dir, const fs::path& out_dir, int jobs) {
  config.validate();
  if (jobs < 1) throw Error(ErrorKind::InvalidArgument, "jobs must be >= 1");
  const fs::path samples_dir = input_dir / "samples";
  std::error_code ec;
  if (!fs::is_directory(samples_dir, ec))
    throw Error(ErrorKind::MissingArtifact, "no samples directory at " + samples_dir.string());

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(samples_dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  fs::create_directories(out_dir / "samples");
  fs::create_directories(out_dir / "rejected");

  RunReport report;
  report.samples.resize(dirs.size());
  const auto n = static_cast<std::ptrdiff_t>(dirs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    SampleJob job{config, SampleManifest::scan(dirs[i]), out_dir / "samples" / dirs[i].filename(), {}, {}};
    try {
      fs::create_directories(job.out);
      job.status = load_status(job.out / "status.json");
      if (!job.status.contains("stages") || !job.status["stages"].is_object()) job.status["stages"] = json::object();
      job.run();
      job.status["id"] = job.manifest.id;
      job.status["inputs"] = manifest_json(job.manifest, input_dir);
      job.status["status"] = to_string(job.outcome.status);
      write_if_changed(job.out / "status.json", job.status.dump(2) + "\n");
      const fs::path rej = out_dir / "rejected" / (job.manifest.id + ".json");
      if (job.outcome.status == SampleStatus::Rejected) {
        write_if_changed(rej, json{{"id", job.manifest.id},
                                   {"reason", job.outcome.reason},
                                   {"score", *job.outcome.consistency},
                                   {"threshold", config.consistency_threshold},
                                   {"artifacts", fs::relative(job.out, out_dir).generic_string()}}
                                      .dump(2) +
                                  "\n");
      } else {
        fs::remove(rej, ec);  // a record from an earlier run with other settings
      }
    } catch (const std::exception& e) {
      job.outcome.id = job.manifest.id;
      job.outcome.status = SampleStatus::Failed;
      job.outcome.reason = "StageFailure";
      job.outcome.message = e.what();
    }
    report.samples[i] = std::move(job.outcome);
  }

  for (const auto& o : report.samples) {
    report.executed += o.executed;
    report.cached += o.cached;
  }
  write_if_changed(out_dir / "report.json", report.to_json(config).dump(2) + "\n");
  return report;
}

}  // namespace evk
