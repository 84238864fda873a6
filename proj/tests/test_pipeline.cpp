#include <fstream>
#include <map>
#include <sstream>

#include "evk/maskvote.hpp"
#include "evk/pipeline.hpp"
#include "support.hpp"

using namespace evk;
namespace fs = std::filesystem;
using Reports = std::vector<nlohmann::json>;

namespace {

FixtureOptions small_fixture(int samples = 3) {
  FixtureOptions o;
  o.samples = samples;
  o.resolution = 16;
  o.views = 8;
  o.image_size = 48;
  o.seed = 5;
  return o;
}

RunConfig load_config(const fs::path& input) {
  std::ifstream in(input / "config.json");
  return RunConfig::from_json(nlohmann::json::parse(in));
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const SampleOutcome& outcome(const RunReport& r, const std::string& id) {
  for (const auto& s : r.samples)
    if (s.id == id) return s;
  FAIL("no sample " << id);
  throw;
}

VoxelGrid sphere(int r, double radius) {
  VoxelGrid g(VoxelDomain(r, Bounds{}));
  const double c = (r - 1) / 2.0;
  for (int x = 0; x < r; ++x)
    for (int y = 0; y < r; ++y)
      for (int z = 0; z < r; ++z)
        g.set(x, y, z, (x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c) <= radius * radius);
  return g;
}

nlohmann::json method_report(const std::string& m, double cd, double nc, double f1) {
  return {{"method", m}, {"metrics3d", {{"cd_x1000", cd}, {"nc", nc}, {"f1_at_001", f1}}}};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run config JSON") {
  RunConfig c;
  c.tau = 0.75;
  c.dilation_percents = {5};
  c.embedder = "file:/tmp/x";
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(RunConfig::from_json(nlohmann::json::object()).to_json() == RunConfig{}.to_json());
  CHECK_ERROR_KIND(RunConfig::from_json({{"tua", 0.5}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"tau", 0.0}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"tau", 1.5}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"n_views", 0}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"repaint_steps", 0}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"dilation_percents", {-1}}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"render_size", 8}}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(RunConfig::from_json({{"embedder", "dino"}}), ErrorKind::InvalidArgument);
  CHECK_NOTHROW(RunConfig::from_json({{"consistency_threshold", 1.01}}));
}

TEST_CASE("a missing mask directory isolates one sample") {
  const auto dir = test::temp_dir("pipe_missing");
  write_fixture(dir / "in", small_fixture(3));
  fs::remove_all(dir / "in/samples/s001/masks");
  const auto cfg = load_config(dir / "in");
  const auto r = run_pipeline(cfg, dir / "in", dir / "out", 2);
  REQUIRE(r.samples.size() == 3);
  const auto& bad = outcome(r, "s001");
  CHECK(bad.status == SampleStatus::Failed);
  CHECK(bad.reason == "MissingArtifact");
  CHECK(bad.failed_stage == stage::kMaskVote);
  CHECK(bad.message.find("s001") != std::string::npos);
  CHECK(bad.stages.at(stage::kRepaint) == "blocked");
  CHECK(r.count(SampleStatus::Failed) == 1);
  CHECK(r.count(SampleStatus::Accepted) + r.count(SampleStatus::Rejected) == 2);
  for (const char* id : {"s000", "s002"}) {
    const auto& s = outcome(r, id);
    for (const auto& [stage_name, state] : s.stages) CHECK(state == "done");
    CHECK(fs::exists(dir / "out/samples" / id / "edit.evk"));
  }
  const auto j = read_json(dir / "out/report.json");
  CHECK(j.at("failed").size() == 1);
  CHECK(j.at("sample_count") == 3);
}

TEST_CASE("a rerun executes nothing and changes no bytes") {
  const auto dir = test::temp_dir("pipe_rerun");
  write_fixture(dir / "in", small_fixture(3));
  const auto cfg = load_config(dir / "in");
  const auto first = run_pipeline(cfg, dir / "in", dir / "out", 2);
  CHECK(first.executed == 9);
  CHECK(first.cached == 0);
  const auto before = snapshot(dir / "out");
  const auto second = run_pipeline(cfg, dir / "in", dir / "out", 1);
  CHECK(second.executed == 0);
  CHECK(second.cached == 9);
  for (const auto& s : second.samples) CHECK(s.cached == 3);
  CHECK(snapshot(dir / "out") == before);
  // changing a config value that feeds repaint reruns repaint and consistency only
  auto cfg2 = cfg;
  cfg2.repaint_steps = cfg.repaint_steps + 1;
  const auto third = run_pipeline(cfg2, dir / "in", dir / "out", 2);
  CHECK(third.executed == 6);
  CHECK(third.cached == 3);
}

TEST_CASE("threshold above one rejects every sample for consistency") {
  const auto dir = test::temp_dir("pipe_reject");
  write_fixture(dir / "in", small_fixture(3));
  auto cfg = load_config(dir / "in");
  cfg.consistency_threshold = 1.01;
  const auto r = run_pipeline(cfg, dir / "in", dir / "out", 2);
  CHECK(r.count(SampleStatus::Rejected) == 3);
  for (const auto& s : r.samples) {
    CHECK(s.reason == "consistency");
    CHECK(fs::exists(dir / "out/rejected" / (s.id + ".json")));
    CHECK(s.consistency.has_value());
  }
  // lowering it afterwards re-classifies from cached stages
  cfg.consistency_threshold = -1;
  const auto again = run_pipeline(cfg, dir / "in", dir / "out", 2);
  CHECK(again.executed == 0);
  CHECK(again.count(SampleStatus::Accepted) == 3);
  CHECK_FALSE(fs::exists(dir / "out/rejected/s000.json"));
}

TEST_CASE("a corrupt mask fails only its sample") {
  const auto dir = test::temp_dir("pipe_corrupt");
  write_fixture(dir / "in", small_fixture(4));
  const auto cfg = load_config(dir / "in");
  run_pipeline(cfg, dir / "in", dir / "out", 2);
  const auto before = snapshot(dir / "out");
  const auto mask = SampleManifest::scan(dir / "in/samples/s002").mask_files.front();
  std::ofstream(mask, std::ios::binary) << "not a png";
  const auto r = run_pipeline(cfg, dir / "in", dir / "out", 3);
  const auto& bad = outcome(r, "s002");
  CHECK(bad.status == SampleStatus::Failed);
  CHECK(bad.reason == "StageFailure");
  CHECK(r.count(SampleStatus::Failed) == 1);
  const auto after = snapshot(dir / "out");
  for (const auto& [name, bytes] : before) {
    if (name.find("s002") != std::string::npos || name == "report.json") continue;
    CHECK_MESSAGE(after.at(name) == bytes, name);
  }
}

TEST_CASE("sample manifests list what is missing") {
  const auto dir = test::temp_dir("pipe_manifest");
  write_fixture(dir / "in", small_fixture(1));
  const auto m = SampleManifest::scan(dir / "in/samples/s000");
  CHECK(m.id == "s000");
  CHECK(m.mask_files.size() == 8);
  CHECK(std::is_sorted(m.mask_files.begin(), m.mask_files.end()));
  CHECK(m.missing_for(stage::kMaskVote).empty());
  fs::remove(dir / "in/samples/s000/latents/tgt.evk");
  const auto m2 = SampleManifest::scan(dir / "in/samples/s000");
  CHECK(m2.missing_for(stage::kMaskVote).empty());
  CHECK_FALSE(m2.missing_for(stage::kRepaint).empty());
}

TEST_CASE("robustness study") {
  Rng rng(1);
  VoxelGrid m(VoxelDomain(20, Bounds{}));
  for (int x = 5; x < 12; ++x)
    for (int y = 6; y < 10; ++y)
      for (int z = 4; z < 14; ++z) m.set(x, y, z, true);
  const auto zero = robustness_study(m, {0});
  REQUIRE(zero.size() == 1);
  CHECK(zero[0].iou == 1.0);
  CHECK(zero[0].count == m.count());

  const auto rows = robustness_study(m, {27, 9, 18});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].percent == 9);
  CHECK(rows[2].percent == 27);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].iou <= rows[i - 1].iou);
    CHECK(rows[i].count >= rows[i - 1].count);
  }
  for (const auto& row : rows) CHECK(row.iou == doctest::Approx(double(m.count()) / row.count));

  const auto s = robustness_study(sphere(80, 32), {9, 18, 27});
  CHECK(s[0].count > sphere(80, 32).count());
  CHECK(s[1].count > s[0].count);
  CHECK(s[2].count > s[1].count);
  CHECK(s[0].count == dilate_mask(sphere(80, 32), 9).count());

  CHECK_ERROR_KIND(robustness_study(VoxelGrid(VoxelDomain(8, Bounds{})), {9}), ErrorKind::EmptyMask);
}

TEST_CASE("relative gains") {
  CHECK(relative_gain(10, 20, true) == 50.0);
  CHECK(relative_gain(0.9, 0.8, false) == doctest::Approx(12.5));
  CHECK(relative_gain(80, 40, false) == 100.0);
  CHECK(relative_gain(30, 20, true) == -50.0);
  CHECK(std::isnan(relative_gain(1, 0, true)));
}

TEST_CASE("report tables") {
  const auto one = report_tables(Reports{method_report("ours", 10, 0.9, 80)});
  REQUIRE(one.rows.size() == 1);
  CHECK(one.baseline == "ours");
  CHECK(one.rows[0].count == 1);
  CHECK(one.rows[0].means.at("cd_x1000") == 10.0);
  CHECK(one.rows[0].means.at("nc") == 0.9);
  CHECK(*one.rows[0].impro_3d == 0.0);

  const auto two = report_tables(Reports{method_report("a_ours", 10, 0.9, 80), method_report("b_base", 20, 0.8, 40)},
                                  "b_base");
  REQUIRE(two.rows.size() == 2);
  CHECK(two.rows[0].method == "a_ours");
  CHECK(*two.rows[0].impro_3d == doctest::Approx((50 + 12.5 + 100) / 3.0));
  CHECK(std::round(*two.rows[0].impro_3d * 10) / 10 == 54.2);
  CHECK(*two.rows[1].impro_3d == 0.0);
  CHECK_FALSE(two.rows[0].impro_2d.has_value());
  CHECK(two.to_text().find("a_ours") != std::string::npos);
  CHECK(two.to_json().at("baseline") == "b_base");

  // several reports per method average
  const auto avg = report_tables(Reports{method_report("m", 10, 0.9, 80), method_report("m", 20, 0.7, 60)});
  CHECK(avg.rows[0].count == 2);
  CHECK(avg.rows[0].means.at("cd_x1000") == 15.0);

  CHECK_ERROR_KIND(report_tables(Reports{}), ErrorKind::NoReports);
  CHECK_ERROR_KIND(report_tables(Reports{nlohmann::json{{"cd_x1000", 1}}}), ErrorKind::NoReports);
  CHECK_ERROR_KIND(report_tables(Reports{method_report("m", 1, 1, 1)}, "other"), ErrorKind::InvalidArgument);

  const auto dir = test::temp_dir("tables");
  std::ofstream(dir / "a.json") << method_report("x", 4, 0.5, 50).dump();
  std::ofstream(dir / "notes.txt") << "ignored";
  CHECK(report_tables(dir).rows.size() == 1);
  CHECK_ERROR_KIND(report_tables(test::temp_dir("tables_empty")), ErrorKind::NoReports);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

}  // TEST_SUITE
