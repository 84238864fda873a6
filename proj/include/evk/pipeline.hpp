#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evk/geom.hpp"

namespace evk {

struct RunConfig {
  double tau = 0.5;
  int n_views = 70;  // every sample must supply exactly this many views and masks
  std::vector<double> dilation_percents{0, 9, 18, 27};
  double consistency_threshold = 0.85;  // not given by the method description; see README
  std::uint64_t seed = 0;
  int repaint_steps = 25;
  int consistency_views = 10;
  int render_size = 128;
  std::string embedder = "proxy";

  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

namespace stage {
inline constexpr const char* kMaskVote = "maskvote";
inline constexpr const char* kRepaint = "repaint";
inline constexpr const char* kConsistency = "consistency";
}  // namespace stage

/// Files a sample directory provides. Layout under <input>/samples/<id>/:
///   grid.evk           occupancy [R,R,R] over which views are voted
///   views.json         cameras, one per mask
///   masks/*.png        2D edit masks, matched to views in file-name order
///   latents/src.evk    source latent [C,R,R,R]
///   latents/tgt.evk    initial target prediction [C,R,R,R]
/// Optional, carried through untouched: images/src.png, images/tgt.png,
/// prompt.txt, boxes.json.
struct SampleManifest {
  std::string id;
  std::filesystem::path dir;
  std::filesystem::path grid, views, masks_dir, src_latent, tgt_latent;
  std::vector<std::filesystem::path> mask_files;  // sorted
  std::map<std::string, std::filesystem::path> extras;

  static SampleManifest scan(const std::filesystem::path& sample_dir);
  /// Inputs a stage needs that are absent, relative to the sample dir.
  std::vector<std::string> missing_for(const std::string& stage_name) const;
};

enum class SampleStatus { Accepted, Rejected, Failed };
std::string to_string(SampleStatus s);

struct SampleOutcome {
  std::string id;
  SampleStatus status = SampleStatus::Failed;
  std::map<std::string, std::string> stages;  // stage -> done | failed | blocked
  std::string reason;                          // rejection reason or error kind
  std::string failed_stage;
  std::string message;
  std::optional<std::size_t> mask_voxels;
  std::optional<double> consistency;
  int executed = 0, cached = 0;  // stage counts for this invocation only
};

struct RunReport {
  std::vector<SampleOutcome> samples;  // sorted by id
  int executed = 0, cached = 0;

  std::size_t count(SampleStatus s) const;
  /// Deterministic summary written to report.json. Execution counts are
  /// left out so that a rerun reproduces the file byte for byte.
  nlohmann::json to_json(const RunConfig& config) const;
};

/// Runs maskvote -> repaint -> consistency for every sample under
/// <input>/samples, writing to <out>. Stages whose recorded input
/// fingerprint matches are skipped. Sample failures are isolated and reported,
/// never thrown; only configuration and I/O problems with <out> itself throw.
RunReport run_pipeline(const RunConfig& config, const std::filesystem::path& input_dir,
                       const std::filesystem::path& out_dir, int jobs = 1);

struct RobustnessRow {
  double percent = 0;
  std::size_t count = 0;
  double iou = 1;
};

/// Dilates the mask by each percent of its bounding-sphere radius and scores
/// it against the original. Rows sorted by percent. Throws EmptyMask.
std::vector<RobustnessRow> robustness_study(const VoxelGrid& mask, std::vector<double> percents);

struct MethodRow {
  std::string method;
  std::size_t count = 0;
  std::map<std::string, double> means;
  std::optional<double> impro_3d, impro_2d;  // percent, vs the baseline
};

struct ReportTables {
  std::string baseline;
  std::vector<MethodRow> rows;  // sorted by method name
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Metric keys recognized in report files, with their direction.
struct MetricSpec {
  const char* key;
  bool lower_is_better;
  bool is_3d;
};
const std::vector<MetricSpec>& table_metrics();

/// Relative gain of `value` over `base`, in percent, signed so that positive
/// means better.
double relative_gain(double value, double base, bool lower_is_better);

/// Aggregates every *.json file in `dir` that carries a "method" string.
/// Metrics may sit at top level or inside nested objects. An empty baseline
/// picks the first method by name. Throws NoReports.
ReportTables report_tables(const std::filesystem::path& dir, const std::string& baseline = "");
ReportTables report_tables(const std::vector<nlohmann::json>& reports, const std::string& baseline = "");

struct FixtureOptions {
  int samples = 10;
  int resolution = 24;
  int views = 24;
  int channels = 4;
  int image_size = 96;
  std::uint64_t seed = 1;
};

/// Writes a synthetic input directory: random box-union shapes, an edit
/// region per sample, silhouette masks of that region, and source / target
/// latents whose first channel encodes occupancy (+1 inside, -1 outside).
/// Also writes <dir>/config.json matching the fixture.
void write_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

/// FNV-1a 64.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace evk
