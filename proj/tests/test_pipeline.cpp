#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "awf/pipeline.hpp"
#include "oracles.hpp"

using namespace awf;

namespace {

bool inside_box(const LidarPoint& p, const Box3D& b) {
  const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
  const double dx = p.x - b.x, dy = p.y - b.y;
  const double lx = dx * c - dy * s;
  const double ly = dx * s + dy * c;
  return std::fabs(lx) <= b.l / 2 + 1e-9 && std::fabs(ly) <= b.w / 2 + 1e-9 &&
         std::fabs(p.z - b.z) <= b.h / 2 + 1e-9;
}

PipelineConfig quick_config(PipelineMode mode, int frames, std::vector<int> severities) {
  PipelineConfig cfg;
  cfg.mode = mode;
  cfg.frames = frames;
  cfg.objects_per_frame = 3;
  cfg.severities = std::move(severities);
  cfg.jobs = 2;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("config parsing accepts defaults and rejects unknown keys") {
  const PipelineConfig c = parse_pipeline_config("{}");
  CHECK(c.frames == 10);
  CHECK(c.mode == PipelineMode::Fuse);
  CHECK(c.severities.size() == 5);

  CHECK_THROWS_WITH_AS(parse_pipeline_config(R"({"frame_count": 3})"),
                       doctest::Contains("unknown key 'frame_count'"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_pipeline_config(R"({"detect": {"scorethresh": 0.2}})"),
                       doctest::Contains("unknown key 'scorethresh'"), std::invalid_argument);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"mode": "warp"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"severities": [9]})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_pipeline_config("{"), std::invalid_argument);

  const PipelineConfig c2 = parse_pipeline_config(
      R"({"mode":"baseline","frames":4,"weathers":["rain","fog"],"severities":[2,3],
          "detect":{"score_thresh":0.3},"scene":{"voxel":[0.5,0.5,4.0]}})");
  CHECK(c2.mode == PipelineMode::Baseline);
  CHECK(c2.frames == 4);
  CHECK(c2.weathers.size() == 2);
  CHECK(c2.detect.score_thresh == 0.3);
  CHECK(c2.scene.voxel.dx == 0.5);
}

TEST_CASE("synthetic scenes are seeded and well-populated") {
  const SceneConfig scene;
  const Frame empty = synth_scene(3, 0, scene);
  CHECK(empty.gt3d.empty());
  CHECK(empty.points.size() > 1000);  // ground plane only

  const Frame a = synth_scene(123, 3, scene);
  const Frame b = synth_scene(123, 3, scene);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); i += 97) {
    CHECK(a.points.points[i].x == b.points.points[i].x);
    CHECK(a.points.points[i].z == b.points.points[i].z);
  }
  REQUIRE(a.gt3d.size() == b.gt3d.size());
  for (std::size_t i = 0; i < a.image.numel(); ++i) CHECK(a.image[i] == b.image[i]);

  // every ground-truth box holds a solid cluster
  for (const Box3D& box : a.gt3d) {
    int inside = 0;
    for (const LidarPoint& p : a.points.points) inside += inside_box(p, box);
    CHECK(inside >= 50);
  }
  CHECK(a.gt2d.size() == a.gt3d.size());
}

TEST_CASE("ground-truth boxes project onto the range image and decode back") {
  const SceneConfig scene;
  const Frame frame = synth_scene(77, 3, scene);
  const auto range_boxes = project_boxes_to_range(frame.gt3d, scene.projection);
  CHECK(range_boxes.size() == frame.gt3d.size());
  const HeadOutputs heads =
      heatmap_targets(range_boxes, scene.projection.height, scene.projection.width);
  const auto decoded = nms_2d(decode_center_heatmap(heads, 0.5, 64), 0.5);
  CHECK(decoded.size() == range_boxes.size());
}

TEST_CASE("clean-weather oracle pipeline reaches AP 1") {
  for (PipelineMode mode : {PipelineMode::Restore, PipelineMode::Fuse}) {
    PipelineConfig cfg = quick_config(mode, 6, {0});
    const EvalReport report = run_pipeline(cfg);
    REQUIRE(report.weather.size() == 1);
    REQUIRE(report.weather[0].per_severity.size() == 1);
    CHECK(report.weather[0].per_severity[0].skipped_frames.empty());
    CHECK(report.weather[0].per_severity[0].ap_moderate == doctest::Approx(1.0));
  }
}

TEST_CASE("restoration lifts AP under fog") {
  const double ap_base =
      run_pipeline(quick_config(PipelineMode::Baseline, 10, {3})).weather[0].per_severity[0].ap_moderate;
  const double ap_restored =
      run_pipeline(quick_config(PipelineMode::Restore, 10, {3})).weather[0].per_severity[0].ap_moderate;
  CHECK(ap_restored >= ap_base);
  CHECK(ap_restored > 0.0);
}

TEST_CASE("fusion with identity-calibrated maps tracks restoration") {
  const double ap_restored =
      run_pipeline(quick_config(PipelineMode::Restore, 8, {3})).weather[0].per_severity[0].ap_moderate;
  const double ap_fused =
      run_pipeline(quick_config(PipelineMode::Fuse, 8, {3})).weather[0].per_severity[0].ap_moderate;
  CHECK(ap_fused >= ap_restored - 0.01);
}

TEST_CASE("pipeline reports are byte-deterministic") {
  PipelineConfig cfg = quick_config(PipelineMode::Fuse, 4, {1, 3});
  cfg.weathers = {WeatherKind::Fog, WeatherKind::Sunlight};
  const std::string a = report_to_json(run_pipeline(cfg));
  const std::string b = report_to_json(run_pipeline(cfg));
  CHECK(a == b);
  CHECK(a.find("\"tool\": \"awfusion\"") != std::string::npos);

  // single-threaded execution must agree with the worker pool
  cfg.jobs = 1;
  CHECK(report_to_json(run_pipeline(cfg)) == a);
}

TEST_CASE("a failing stage marks the frame instead of aborting") {
  const SceneConfig scene;
  const Frame frame = synth_scene(5, 2, scene);
  PipelineConfig cfg = quick_config(PipelineMode::Restore, 1, {2});
  cfg.restore.compensator = ComponentKind::File;
  cfg.restore.compensator_params = "/nonexistent/params.awtf";
  const FrameOutcome outcome = process_frame(frame, WeatherKind::Fog, 2, cfg, Rng(1));
  CHECK_FALSE(outcome.ok);
  CHECK_FALSE(outcome.diagnostic.empty());
  CHECK(outcome.boxes.dets.empty());

  // and run_pipeline surfaces it in the report
  cfg.frames = 2;
  const EvalReport report = run_pipeline(cfg);
  CHECK(report.weather[0].per_severity[0].skipped_frames.size() == 2);
}

TEST_CASE("fusion parameter bundles round-trip through files") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "awf_pipe_tests";
  fs::create_directories(dir);

  AttentionFuseParams fp = AttentionFuseParams::make(3);
  std::uint64_t k = 5;
  for (ParametricMap* m : fp.maps()) seed_params(*m, k++, 0.3);
  const std::string fpath = (dir / "fusion.awtf").string();
  save_fusion_params(fpath, fp);
  AttentionFuseParams fp2 = AttentionFuseParams::make(3);
  load_fusion_params(fpath, fp2);
  CHECK(fp2.q1->params()[0] ==
        static_cast<double>(static_cast<float>(fp.q1->params()[0])));

  AlignParams ap = AlignParams::make(3);
  for (ParametricMap* m : ap.maps()) seed_params(*m, k++, 0.3);
  const std::string apath = (dir / "align.awtf").string();
  save_align_params(apath, ap);
  AlignParams ap2 = AlignParams::make(3);
  load_align_params(apath, ap2);
  CHECK(ap2.offset_net1->params().size() == ap.offset_net1->params().size());

  AttentionFuseParams wrong = AttentionFuseParams::make(4);
  CHECK_THROWS_AS(load_fusion_params(fpath, wrong), FormatError);
}

TEST_SUITE_END();
