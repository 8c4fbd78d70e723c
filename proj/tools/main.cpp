// awfusion CLI: corrupt / restore / fuse / detect / eval over the desk-scale
// adverse-weather multi-modal detection pipeline. File formats are documented
// in the README.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "awf/diffusion.hpp"
#include "awf/kitti_io.hpp"
#include "awf/pipeline.hpp"
#include "awf/png_io.hpp"
#include "awf/point_restore.hpp"
#include "awf/tensor_io.hpp"

namespace {

using nlohmann::ordered_json;

awf::PipelineConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return awf::default_demo_config();
  return awf::load_pipeline_config(path);
}

std::vector<awf::Box2D> read_boxes2d(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw awf::FormatError("cannot open '" + path + "'");
  ordered_json j = ordered_json::parse(in);
  std::vector<awf::Box2D> boxes;
  for (const auto& b : j) {
    awf::Box2D box;
    box.cx = b.at("cx").get<double>();
    box.cy = b.at("cy").get<double>();
    box.w = b.at("w").get<double>();
    box.h = b.at("h").get<double>();
    box.score = b.value("score", 1.0);
    boxes.push_back(box);
  }
  return boxes;
}

ordered_json box3d_to_json(const awf::Box3D& b) {
  return ordered_json{{"x", b.x}, {"y", b.y},     {"z", b.z},
                      {"l", b.l}, {"w", b.w},     {"h", b.h},
                      {"yaw", b.yaw}, {"score", b.score},
                      {"difficulty", awf::difficulty_name(b.difficulty)}};
}

awf::Box3D box3d_from_json(const ordered_json& j) {
  awf::Box3D b;
  b.x = j.at("x").get<double>();
  b.y = j.at("y").get<double>();
  b.z = j.at("z").get<double>();
  b.l = j.at("l").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
  b.yaw = j.value("yaw", 0.0);
  b.score = j.value("score", 0.0);
  const std::string d = j.value("difficulty", std::string("moderate"));
  if (d == "easy") b.difficulty = awf::Difficulty::Easy;
  else if (d == "moderate") b.difficulty = awf::Difficulty::Moderate;
  else if (d == "hard") b.difficulty = awf::Difficulty::Hard;
  else b.difficulty = awf::Difficulty::Ignore;
  return b;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw awf::FormatError("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"awfusion: weather-robust LiDAR+camera 3D detection sandbox"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path, out_dir;
  std::uint64_t seed = 7;
  bool seed_given = false;
  app.add_option("--config", config_path, "pipeline config JSON");
  app.add_option("--out-dir", out_dir, "output directory (overrides the config)");
  app.add_option("--seed", seed, "random seed (overrides the config)")
      ->each([&](const std::string&) { seed_given = true; });

  // project
  auto* project_cmd = app.add_subcommand("project", "project a velodyne .bin to a range image");
  std::string proj_points, proj_out, proj_png;
  project_cmd->add_option("--points", proj_points, "velodyne .bin input")->required();
  project_cmd->add_option("--out", proj_out, "range image .awri output")->required();
  project_cmd->add_option("--png", proj_png, "optional 16-bit PNG dump");

  // corrupt
  auto* corrupt_cmd = app.add_subcommand("corrupt", "apply a weather corruption");
  std::string cor_kind = "fog", cor_points, cor_image, cor_out, cor_png;
  int cor_severity = 3;
  corrupt_cmd->add_option("--kind", cor_kind, "rain|fog|sunlight");
  corrupt_cmd->add_option("--severity", cor_severity, "0..5");
  corrupt_cmd->add_option("--points", cor_points, "velodyne .bin input");
  corrupt_cmd->add_option("--image", cor_image, "image .awtf input");
  corrupt_cmd->add_option("--out", cor_out, "output path")->required();
  corrupt_cmd->add_option("--png", cor_png, "optional PNG dump (image mode)");

  // restore-image
  auto* ri_cmd = app.add_subcommand("restore-image", "conditional reverse-sampling restoration");
  std::string ri_in, ri_out, ri_png, ri_params;
  ri_cmd->add_option("--input", ri_in, "degraded image .awtf")->required();
  ri_cmd->add_option("--out", ri_out, "restored image .awtf")->required();
  ri_cmd->add_option("--png", ri_png, "optional PNG dump");
  ri_cmd->add_option("--params", ri_params, "denoiser parameter file (default: zero denoiser)");

  // restore-points
  auto* rp_cmd = app.add_subcommand("restore-points", "detection-guided point densification");
  std::string rp_points, rp_boxes, rp_out, rp_params;
  rp_cmd->add_option("--points", rp_points, "velodyne .bin input")->required();
  rp_cmd->add_option("--boxes", rp_boxes, "range-image boxes JSON")->required();
  rp_cmd->add_option("--out", rp_out, "velodyne .bin output")->required();
  rp_cmd->add_option("--params", rp_params, "compensator parameter file (default: zero)");

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "cross-attention fusion + bidirectional alignment");
  std::string fu_cam, fu_lidar, fu_out_fused, fu_out_aligned, fu_fusion_params, fu_align_params;
  fuse_cmd->add_option("--camera", fu_cam, "camera BEV .awtf")->required();
  fuse_cmd->add_option("--lidar", fu_lidar, "lidar BEV .awtf")->required();
  fuse_cmd->add_option("--out-fused", fu_out_fused, "fused BEV output");
  fuse_cmd->add_option("--out-aligned", fu_out_aligned, "aligned BEV output")->required();
  fuse_cmd->add_option("--fusion-params", fu_fusion_params, "fusion parameter bundle");
  fuse_cmd->add_option("--align-params", fu_align_params, "alignment parameter bundle");

  // detect
  auto* det_cmd = app.add_subcommand("detect", "decode 3D boxes from a BEV feature");
  std::string det_bev, det_out;
  bool det_fused = false;
  det_cmd->add_option("--bev", det_bev, "BEV feature .awtf")->required();
  det_cmd->add_option("--out", det_out, "detections JSON output")->required();
  det_cmd->add_flag("--fused-calibration", det_fused, "use the fused-feature gates");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "AP(R40) over detection/ground-truth frames");
  std::string ev_frames, ev_out, ev_mode = "bev_rotated";
  double ev_thresh = 0.5;
  eval_cmd->add_option("--frames", ev_frames, "JSON: {\"frames\":[{\"dets\":[],\"gts\":[]}]}")
      ->required();
  eval_cmd->add_option("--out", ev_out, "report JSON output");
  eval_cmd->add_option("--iou-thresh", ev_thresh, "matching threshold");
  eval_cmd->add_option("--iou-mode", ev_mode, "axis2d|bev_rotated|3d");

  // demo
  auto* demo_cmd = app.add_subcommand("demo", "run the full synthetic pipeline sweep");
  std::string demo_report = "report.json";
  demo_cmd->add_option("--report", demo_report, "report filename (within --out-dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    awf::PipelineConfig cfg = load_config_or_default(config_path);
    if (seed_given) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (project_cmd->parsed()) {
      const awf::PointCloud cloud = awf::read_velodyne(proj_points);
      const awf::RangeImage ri = awf::project(cloud, cfg.scene.projection);
      awf::save_range_image(proj_out, ri);
      if (!proj_png.empty()) awf::write_range_png(proj_png, ri);
      std::cout << "projected " << cloud.size() << " points, " << ri.count_valid()
                << " valid pixels -> " << proj_out << "\n";
    } else if (corrupt_cmd->parsed()) {
      const awf::WeatherSpec spec{awf::weather_kind_from_name(cor_kind), cor_severity};
      if (!cor_points.empty()) {
        const awf::PointCloud cloud = awf::read_velodyne(cor_points);
        const awf::PointCloud out = awf::corrupt_points(cloud, spec, awf::Rng(cfg.seed));
        awf::write_velodyne(cor_out, out);
        std::cout << "corrupted points " << cloud.size() << " -> " << out.size() << "\n";
      } else if (!cor_image.empty()) {
        const awf::Tensor img = awf::load_tensor(cor_image);
        const awf::Tensor out = awf::corrupt_image(img, spec, awf::Rng(cfg.seed));
        awf::save_tensor(cor_out, out);
        if (!cor_png.empty()) awf::write_png_rgb8(cor_png, out);
        std::cout << "corrupted image -> " << cor_out << "\n";
      } else {
        throw std::invalid_argument("corrupt: pass --points or --image");
      }
    } else if (ri_cmd->parsed()) {
      const awf::Tensor degraded = awf::load_tensor(ri_in);
      const awf::NoiseSchedule sched = awf::make_schedule(
          cfg.diffusion.steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
      const awf::Subsequence sub =
          awf::Subsequence::even_spacing(cfg.diffusion.steps, cfg.diffusion.sample_steps);
      awf::Denoiser denoiser;
      if (!ri_params.empty()) {
        denoiser = awf::make_reference_denoiser(degraded.dim(0));
        awf::load_params(ri_params, *denoiser.map);
      } else {
        const std::vector<awf::Dim> shape = degraded.shape();
        denoiser.map = std::make_shared<awf::FunctionMap>(
            "zero_denoiser", [shape](std::span<const awf::Tensor>) { return awf::Tensor(shape); });
      }
      awf::Rng rng(cfg.seed);
      awf::Tensor x_start(degraded.shape());
      for (std::size_t i = 0; i < x_start.numel(); ++i) x_start[i] = rng.normal();
      awf::Tensor restored = awf::ddim_sample(x_start, degraded, sub, denoiser, sched);
      for (std::size_t i = 0; i < restored.numel(); ++i)
        restored[i] = std::clamp(restored[i], 0.0, 1.0);
      awf::save_tensor(ri_out, restored);
      if (!ri_png.empty()) awf::write_png_rgb8(ri_png, restored);
      std::cout << "restored image -> " << ri_out << "\n";
    } else if (rp_cmd->parsed()) {
      const awf::PointCloud cloud = awf::read_velodyne(rp_points);
      const std::vector<awf::Box2D> boxes = read_boxes2d(rp_boxes);
      awf::CompensatorFn comp;
      if (!rp_params.empty()) {
        auto map = std::make_shared<awf::ConvStackMap>(std::vector<awf::Dim>{1, 8, 1});
        awf::load_params(rp_params, *map);
        comp = awf::compensator_from_map(map);
      } else {
        comp = [](const awf::Tensor& up, awf::Dim, awf::Dim) { return awf::Tensor(up.shape()); };
      }
      const awf::PointCloud out =
          awf::restore_pointcloud(cloud, cfg.scene.projection, boxes, comp);
      awf::write_velodyne(rp_out, out);
      std::cout << "restored points " << cloud.size() << " -> " << out.size() << "\n";
    } else if (fuse_cmd->parsed()) {
      awf::BevFeature camera{awf::load_tensor(fu_cam), awf::BevTag::Camera};
      awf::BevFeature lidar{awf::load_tensor(fu_lidar), awf::BevTag::Lidar};
      awf::AttentionFuseParams fp = awf::AttentionFuseParams::make(camera.data.dim(0));
      if (!fu_fusion_params.empty()) awf::load_fusion_params(fu_fusion_params, fp);
      const awf::BevFeature fused = awf::attention_fuse(camera, lidar, fp);
      if (!fu_out_fused.empty()) awf::save_tensor(fu_out_fused, fused.data);
      awf::AlignParams ap = awf::AlignParams::make(camera.data.dim(0));
      if (!fu_align_params.empty()) awf::load_align_params(fu_align_params, ap);
      const awf::AlignResult aligned =
          awf::align_bidirectional(fused, camera, ap, awf::Rng(cfg.seed), false);
      awf::save_tensor(fu_out_aligned, aligned.aligned_lidar.data);
      std::cout << "fused + aligned -> " << fu_out_aligned << "\n";
    } else if (det_cmd->parsed()) {
      const awf::Tensor bev = awf::load_tensor(det_bev);
      const awf::DetectionMaps maps = awf::synthesize_detection_maps(
          bev, cfg.detect, det_fused, cfg.scene.extent, cfg.scene.voxel, {0.0, 1.57});
      awf::AnchorConfig anchors;
      anchors.anchor_z = cfg.detect.anchor_z;
      anchors.score_thresh = det_fused ? cfg.detect.fused_score_thresh : cfg.detect.score_thresh;
      anchors.nms_iou = cfg.detect.nms_iou;
      anchors.extent = cfg.scene.extent;
      anchors.voxel = cfg.scene.voxel;
      const std::vector<awf::Box3D> dets = awf::anchor_decode_3d(maps.score, maps.reg, anchors);
      ordered_json out = ordered_json::array();
      for (const awf::Box3D& b : dets) out.push_back(box3d_to_json(b));
      write_text(det_out, out.dump(2) + "\n");
      std::cout << dets.size() << " detections -> " << det_out << "\n";
    } else if (eval_cmd->parsed()) {
      std::ifstream in(ev_frames);
      if (!in) throw awf::FormatError("cannot open '" + ev_frames + "'");
      ordered_json j = ordered_json::parse(in);
      std::vector<awf::FrameBoxes> frames;
      for (const auto& f : j.at("frames")) {
        awf::FrameBoxes fb;
        for (const auto& d : f.at("dets")) fb.dets.push_back(box3d_from_json(d));
        for (const auto& g : f.at("gts")) fb.gts.push_back(box3d_from_json(g));
        frames.push_back(std::move(fb));
      }
      const double ap = awf::ap_r40_frames(
          frames, ev_thresh,
          ev_mode == "axis2d" ? awf::IouMode::Axis2D
                              : (ev_mode == "3d" ? awf::IouMode::Full3D : awf::IouMode::BevRotated));
      ordered_json rep{{"metric", "ap_r40"}, {"iou_mode", ev_mode}, {"iou_thresh", ev_thresh},
                       {"ap_moderate", ap}};
      const std::string text = rep.dump(2) + "\n";
      if (!ev_out.empty()) write_text(ev_out, text);
      std::cout << text;
    } else if (demo_cmd->parsed()) {
      const awf::EvalReport report = awf::run_pipeline(cfg);
      std::filesystem::create_directories(cfg.out_dir.empty() ? "." : cfg.out_dir);
      const std::string path =
          (cfg.out_dir.empty() ? std::string(".") : cfg.out_dir) + "/" + demo_report;
      write_text(path, awf::report_to_json(report));
      std::cout << "report -> " << path << "\noverall moderate mAP: "
                << report.overall_map_moderate << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
