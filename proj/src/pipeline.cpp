#include "awf/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "awf/png_io.hpp"
#include "awf/point_restore.hpp"
#include "awf/tensor_io.hpp"

namespace awf {

using ordered_json = nlohmann::ordered_json;

std::string pipeline_mode_name(PipelineMode m) {
  switch (m) {
    case PipelineMode::Baseline: return "baseline";
    case PipelineMode::Restore: return "restore";
    case PipelineMode::Fuse: return "fuse";
  }
  return "?";
}

PipelineMode pipeline_mode_from_name(const std::string& name) {
  if (name == "baseline") return PipelineMode::Baseline;
  if (name == "restore") return PipelineMode::Restore;
  if (name == "fuse") return PipelineMode::Fuse;
  throw std::invalid_argument("unknown pipeline mode '" + name + "'");
}

std::string component_kind_name(ComponentKind k) {
  switch (k) {
    case ComponentKind::Zero: return "zero";
    case ComponentKind::Oracle: return "oracle";
    case ComponentKind::File: return "file";
  }
  return "?";
}

ComponentKind component_kind_from_name(const std::string& name) {
  if (name == "zero") return ComponentKind::Zero;
  if (name == "oracle") return ComponentKind::Oracle;
  if (name == "file") return ComponentKind::File;
  throw std::invalid_argument("unknown component kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// configuration

namespace {

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + ctx);
  }
}

template <typename T>
void read_if(const ordered_json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_scene(const ordered_json& j, SceneConfig& s) {
  check_keys(j,
             {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max", "voxel", "projection",
              "image_h", "image_w", "ground_z", "ground_step", "points_per_object",
              "min_separation"},
             "scene");
  read_if(j, "x_min", s.extent.x_min);
  read_if(j, "x_max", s.extent.x_max);
  read_if(j, "y_min", s.extent.y_min);
  read_if(j, "y_max", s.extent.y_max);
  read_if(j, "z_min", s.extent.z_min);
  read_if(j, "z_max", s.extent.z_max);
  if (j.contains("voxel")) {
    const auto v = j.at("voxel");
    if (!v.is_array() || v.size() != 3)
      throw std::invalid_argument("config: scene.voxel must be [dx,dy,dz]");
    s.voxel = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }
  if (j.contains("projection")) {
    const auto p = j.at("projection");
    check_keys(p, {"height", "width", "theta_min_deg", "theta_max_deg"}, "scene.projection");
    read_if(p, "height", s.projection.height);
    read_if(p, "width", s.projection.width);
    double tmin_deg = s.projection.theta_min * 180.0 / 3.14159265358979323846;
    double tmax_deg = s.projection.theta_max * 180.0 / 3.14159265358979323846;
    read_if(p, "theta_min_deg", tmin_deg);
    read_if(p, "theta_max_deg", tmax_deg);
    s.projection.theta_min = tmin_deg * 3.14159265358979323846 / 180.0;
    s.projection.theta_max = tmax_deg * 3.14159265358979323846 / 180.0;
  }
  read_if(j, "image_h", s.image_h);
  read_if(j, "image_w", s.image_w);
  read_if(j, "ground_z", s.ground_z);
  read_if(j, "ground_step", s.ground_step);
  read_if(j, "points_per_object", s.points_per_object);
  read_if(j, "min_separation", s.min_separation);
}

IouMode iou_mode_from_name(const std::string& name) {
  if (name == "axis2d") return IouMode::Axis2D;
  if (name == "bev" || name == "bev_rotated") return IouMode::BevRotated;
  if (name == "3d") return IouMode::Full3D;
  throw std::invalid_argument("unknown iou mode '" + name + "'");
}

std::string iou_mode_name(IouMode m) {
  switch (m) {
    case IouMode::Axis2D: return "axis2d";
    case IouMode::BevRotated: return "bev_rotated";
    case IouMode::Full3D: return "3d";
  }
  return "?";
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"seed", "frames", "objects_per_frame", "mode", "weathers", "severities", "scene",
              "diffusion", "restore", "detect", "eval", "fusion_params", "align_params", "jobs",
              "persist_intermediates", "out_dir"},
             "top level");
  PipelineConfig c;
  read_if(j, "seed", c.seed);
  read_if(j, "frames", c.frames);
  read_if(j, "objects_per_frame", c.objects_per_frame);
  if (j.contains("mode")) c.mode = pipeline_mode_from_name(j.at("mode").get<std::string>());
  if (j.contains("weathers")) {
    c.weathers.clear();
    for (const auto& w : j.at("weathers"))
      c.weathers.push_back(weather_kind_from_name(w.get<std::string>()));
  }
  if (j.contains("severities")) {
    c.severities.clear();
    for (const auto& s : j.at("severities")) {
      const int v = s.get<int>();
      if (v < 0 || v > 5) throw std::invalid_argument("config: severity outside [0,5]");
      c.severities.push_back(v);
    }
  }
  if (j.contains("scene")) parse_scene(j.at("scene"), c.scene);
  if (j.contains("diffusion")) {
    const auto d = j.at("diffusion");
    check_keys(d, {"steps", "beta_start", "beta_end", "sample_steps"}, "diffusion");
    read_if(d, "steps", c.diffusion.steps);
    read_if(d, "beta_start", c.diffusion.beta_start);
    read_if(d, "beta_end", c.diffusion.beta_end);
    read_if(d, "sample_steps", c.diffusion.sample_steps);
  }
  if (j.contains("restore")) {
    const auto r = j.at("restore");
    check_keys(r, {"denoiser", "denoiser_params", "compensator", "compensator_params"},
               "restore");
    if (r.contains("denoiser"))
      c.restore.denoiser = component_kind_from_name(r.at("denoiser").get<std::string>());
    read_if(r, "denoiser_params", c.restore.denoiser_params);
    if (r.contains("compensator"))
      c.restore.compensator = component_kind_from_name(r.at("compensator").get<std::string>());
    read_if(r, "compensator_params", c.restore.compensator_params);
  }
  if (j.contains("detect")) {
    const auto d = j.at("detect");
    check_keys(d,
               {"score_thresh", "occupancy_gate", "height_gate", "intensity_gate",
                "fused_score_thresh", "fused_occupancy_gate", "fused_height_gate",
                "fused_intensity_gate", "nms_iou", "anchor_z"},
               "detect");
    read_if(d, "score_thresh", c.detect.score_thresh);
    read_if(d, "occupancy_gate", c.detect.occupancy_gate);
    read_if(d, "height_gate", c.detect.height_gate);
    read_if(d, "intensity_gate", c.detect.intensity_gate);
    read_if(d, "fused_score_thresh", c.detect.fused_score_thresh);
    read_if(d, "fused_occupancy_gate", c.detect.fused_occupancy_gate);
    read_if(d, "fused_height_gate", c.detect.fused_height_gate);
    read_if(d, "fused_intensity_gate", c.detect.fused_intensity_gate);
    read_if(d, "nms_iou", c.detect.nms_iou);
    read_if(d, "anchor_z", c.detect.anchor_z);
  }
  if (j.contains("eval")) {
    const auto e = j.at("eval");
    check_keys(e, {"iou_mode", "iou_thresh"}, "eval");
    if (e.contains("iou_mode")) c.eval.mode = iou_mode_from_name(e.at("iou_mode").get<std::string>());
    read_if(e, "iou_thresh", c.eval.iou_thresh);
  }
  read_if(j, "fusion_params", c.fusion_params);
  read_if(j, "align_params", c.align_params);
  read_if(j, "jobs", c.jobs);
  read_if(j, "persist_intermediates", c.persist_intermediates);
  read_if(j, "out_dir", c.out_dir);

  if (c.frames < 1) throw std::invalid_argument("config: frames must be >= 1");
  if (c.objects_per_frame < 0)
    throw std::invalid_argument("config: objects_per_frame must be >= 0");
  if (c.weathers.empty() || c.severities.empty())
    throw std::invalid_argument("config: weathers and severities must be non-empty");
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_pipeline_config(text);
}

PipelineConfig default_demo_config() { return PipelineConfig{}; }

// ---------------------------------------------------------------------------
// detection head synthesis

DetectionMaps synthesize_detection_maps(const Tensor& bev, const DetectConfig& dc,
                                        bool fused_calibration, const BevExtent& extent,
                                        const VoxelSize& voxel,
                                        const std::vector<double>& rotations) {
  if (bev.rank() != 3 || bev.dim(0) < 3)
    throw std::invalid_argument("detection head expects a [3,H,W] BEV feature");
  const Dim A = static_cast<Dim>(rotations.size());
  const Dim H = bev.dim(1), W = bev.dim(2);
  DetectionMaps maps{Tensor({A, H, W}), Tensor({A * 7, H, W})};

  const double occ_gate = fused_calibration ? dc.fused_occupancy_gate : dc.occupancy_gate;
  const double h_gate = fused_calibration ? dc.fused_height_gate : dc.height_gate;
  const double int_gate = fused_calibration ? dc.fused_intensity_gate : dc.intensity_gate;

  double occ_max = 0.0;
  for (Dim i = 0; i < H; ++i)
    for (Dim j = 0; j < W; ++j) occ_max = std::max(occ_max, bev.at3(0, i, j));
  if (occ_max <= 0.0) return maps;

  // a cell counts as on-object when it clears the height gate (rejects
  // ground) and the intensity gate (rejects weather scatter); both are
  // absolute channel values
  auto on_object = [&](Dim y, Dim x) {
    return bev.at3(2, y, x) >= h_gate && bev.at3(1, y, x) >= int_gate;
  };

  // gated cells cluster into 8-connected components; each component emits one
  // candidate at its occupancy peak, centered on the component's
  // occupancy-weighted centroid
  std::vector<int> label(static_cast<std::size_t>(H * W), -1);
  int n_components = 0;
  std::vector<Dim> stack;
  for (Dim si = 0; si < H; ++si) {
    for (Dim sj = 0; sj < W; ++sj) {
      const std::size_t sidx = static_cast<std::size_t>(si * W + sj);
      if (label[sidx] >= 0 || !on_object(si, sj) ||
          bev.at3(0, si, sj) / occ_max < occ_gate)
        continue;
      const int comp = n_components++;
      label[sidx] = comp;
      stack.push_back(si * W + sj);
      std::vector<Dim> cells;
      while (!stack.empty()) {
        const Dim flat = stack.back();
        stack.pop_back();
        cells.push_back(flat);
        const Dim y = flat / W, x = flat % W;
        for (Dim dy = -1; dy <= 1; ++dy)
          for (Dim dx = -1; dx <= 1; ++dx) {
            const Dim ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny * W + nx);
            if (label[nidx] >= 0) continue;
            if (!on_object(ny, nx) || bev.at3(0, ny, nx) / occ_max < occ_gate) continue;
            label[nidx] = comp;
            stack.push_back(ny * W + nx);
          }
      }

      double wsum = 0.0, mx = 0.0, my = 0.0, peak_occ = -1.0, h_best = 0.0;
      Dim peak = cells.front();
      for (const Dim flat : cells) {
        const Dim y = flat / W, x = flat % W;
        const double wgt = bev.at3(0, y, x);
        wsum += wgt;
        mx += wgt * (extent.x_min + (static_cast<double>(y) + 0.5) * voxel.dx);
        my += wgt * (extent.y_min + (static_cast<double>(x) + 0.5) * voxel.dy);
        h_best = std::max(h_best, bev.at3(2, y, x));
        if (wgt > peak_occ) {
          peak_occ = wgt;
          peak = flat;
        }
      }
      mx /= wsum;
      my /= wsum;
      double sxx = 0.0, syy = 0.0;
      for (const Dim flat : cells) {
        const Dim y = flat / W, x = flat % W;
        const double wgt = bev.at3(0, y, x);
        const double cx = extent.x_min + (static_cast<double>(y) + 0.5) * voxel.dx;
        const double cy = extent.y_min + (static_cast<double>(x) + 0.5) * voxel.dy;
        sxx += wgt * (cx - mx) * (cx - mx);
        syy += wgt * (cy - my) * (cy - my);
      }

      const Dim pi = peak / W, pj = peak % W;
      const Dim a = (sxx >= syy) ? 0 : std::min<Dim>(1, A - 1);
      const double ax = extent.x_min + (static_cast<double>(pi) + 0.5) * voxel.dx;
      const double ay = extent.y_min + (static_cast<double>(pj) + 0.5) * voxel.dy;
      const double diag = std::sqrt(3.9 * 3.9 + 1.6 * 1.6);
      maps.score.at3(a, pi, pj) = std::clamp((peak_occ / occ_max) * h_best, 0.0, 1.0);
      maps.reg.at3(a * 7 + 0, pi, pj) = (mx - ax) / diag;
      maps.reg.at3(a * 7 + 1, pi, pj) = (my - ay) / diag;
    }
  }
  return maps;
}

std::vector<Box2D> project_boxes_to_range(const std::vector<Box3D>& boxes,
                                          const ProjectionConfig& cfg) {
  constexpr double kPi = 3.14159265358979323846;
  const double span = cfg.theta_max - cfg.theta_min;
  std::vector<Box2D> out;
  for (const Box3D& b : boxes) {
    const auto bev = box_corners_bev(b);
    double umin = HUGE_VAL, umax = -HUGE_VAL, vmin = HUGE_VAL, vmax = -HUGE_VAL;
    for (const auto& c : bev) {
      for (const double z : {b.z - b.h / 2.0, b.z + b.h / 2.0}) {
        const double rr = std::sqrt(c[0] * c[0] + c[1] * c[1] + z * z);
        if (rr <= 0.0) continue;
        const double phi = std::atan2(c[1], c[0]);
        const double theta = std::asin(std::clamp(z / rr, -1.0, 1.0));
        const double u = (1.0 - phi / kPi) * static_cast<double>(cfg.width) * 0.5;
        const double v = (1.0 - (theta - cfg.theta_min) / span) * static_cast<double>(cfg.height);
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
    if (!(umax > umin) || !(vmax > vmin)) continue;
    Box2D box;
    box.cx = (umin + umax) / 2.0;
    box.cy = (vmin + vmax) / 2.0;
    box.w = (umax - umin) + 3.0;  // small pad so edge pixels stay inside
    box.h = (vmax - vmin) + 3.0;
    box.score = 1.0;
    const Dim ccx = static_cast<Dim>(std::floor(box.cx));
    const Dim ccy = static_cast<Dim>(std::floor(box.cy));
    if (ccx < 0 || ccx >= cfg.width || ccy < 0 || ccy >= cfg.height) continue;
    out.push_back(box);
  }
  return out;
}

// ---------------------------------------------------------------------------
// per-frame processing

namespace {

Tensor clamp01(Tensor t) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], 0.0, 1.0);
  return t;
}

Tensor resample_image(const Tensor& img, Dim out_h, Dim out_w) {
  if (img.dim(1) == out_h && img.dim(2) == out_w) return img;
  Tensor grid({out_h, out_w, 2});
  for (Dim i = 0; i < out_h; ++i)
    for (Dim j = 0; j < out_w; ++j) {
      grid.at3(i, j, 0) =
          (out_w == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(out_w - 1);
      grid.at3(i, j, 1) =
          (out_h == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(out_h - 1);
    }
  return grid_sample_bilinear(img, grid);
}

Tensor gaussian_tensor(const std::vector<Dim>& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

/// Image restoration stage: conditional reverse sampling with the configured
/// noise predictor. The oracle predictor closes the sampler algebra around
/// the clean image; it exists to verify the pipeline, not to cheat a metric.
Tensor restore_image_stage(const Tensor& clean, const Tensor& degraded,
                           const PipelineConfig& cfg, Rng rng) {
  const NoiseSchedule sched =
      make_schedule(cfg.diffusion.steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
  const Subsequence sub = Subsequence::even_spacing(cfg.diffusion.steps, cfg.diffusion.sample_steps);
  const Dim tau_s = sub.taus.back();

  Denoiser denoiser;
  Tensor x_start;
  switch (cfg.restore.denoiser) {
    case ComponentKind::Oracle: {
      const Tensor eps = gaussian_tensor(clean.shape(), rng);
      x_start = forward_diffuse(clean, tau_s, eps, sched);
      denoiser.map = std::make_shared<FunctionMap>(
          "oracle_denoiser", [eps](std::span<const Tensor>) { return eps; });
      break;
    }
    case ComponentKind::Zero: {
      x_start = gaussian_tensor(clean.shape(), rng);
      const std::vector<Dim> shape = clean.shape();
      denoiser.map = std::make_shared<FunctionMap>(
          "zero_denoiser", [shape](std::span<const Tensor>) { return Tensor(shape); });
      break;
    }
    case ComponentKind::File: {
      x_start = gaussian_tensor(clean.shape(), rng);
      denoiser = make_reference_denoiser(clean.dim(0));
      load_params(cfg.restore.denoiser_params, *denoiser.map);
      break;
    }
  }
  return clamp01(ddim_sample(x_start, degraded, sub, denoiser, sched));
}

CompensatorFn make_compensator(const Frame& frame, const PipelineConfig& cfg) {
  switch (cfg.restore.compensator) {
    case ComponentKind::Oracle: {
      ProjectionConfig cfg2 = cfg.scene.projection;
      cfg2.height *= 2;
      cfg2.width *= 2;
      auto clean2x = std::make_shared<RangeImage>(project(frame.points, cfg2));
      return [clean2x](const Tensor& up, Dim y0, Dim x0) {
        Tensor fill(up.shape());
        for (Dim i = 0; i < up.dim(0); ++i)
          for (Dim j = 0; j < up.dim(1); ++j) {
            const Dim cy = 2 * y0 + i, cx = 2 * x0 + j;
            if (cy < 0 || cy >= clean2x->config.height || cx < 0 ||
                cx >= clean2x->config.width)
              continue;
            if (clean2x->valid_at(cy, cx)) fill.at2(i, j) = clean2x->range.at2(cy, cx);
          }
        return fill;
      };
    }
    case ComponentKind::Zero:
      return [](const Tensor& up, Dim, Dim) { return Tensor(up.shape()); };
    case ComponentKind::File: {
      auto map = std::make_shared<ConvStackMap>(std::vector<Dim>{1, 8, 1});
      load_params(cfg.restore.compensator_params, *map);
      return compensator_from_map(map);
    }
  }
  throw std::logic_error("unreachable");
}

void persist_frame(const PipelineConfig& cfg, WeatherKind kind, int severity, int frame_id,
                   const Tensor& corrupted_img, const Tensor& used_img,
                   const PointCloud& lidar_source, const Tensor& head_feature) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty()) return;
  fs::create_directories(cfg.out_dir);
  const std::string stem = cfg.out_dir + "/" + weather_kind_name(kind) + "_s" +
                           std::to_string(severity) + "_f" + std::to_string(frame_id) + "_";
  save_tensor(stem + "corrupted_image.awtf", corrupted_img);
  write_png_rgb8(stem + "corrupted_image.png", corrupted_img);
  save_tensor(stem + "input_image.awtf", used_img);
  write_png_rgb8(stem + "input_image.png", used_img);
  const RangeImage ri = project(lidar_source, cfg.scene.projection);
  save_range_image(stem + "range.awri", ri);
  write_range_png(stem + "range.png", ri);
  save_tensor(stem + "head_feature.awtf", head_feature);
}

}  // namespace

FrameOutcome process_frame(const Frame& frame, WeatherKind kind, int severity,
                           const PipelineConfig& cfg, Rng rng) {
  FrameOutcome outcome;
  outcome.boxes.gts = frame.gt3d;
  try {
    const WeatherSpec spec{kind, severity};
    const PointCloud corrupted_pts = corrupt_points(frame.points, spec, rng.split(1));
    const Tensor corrupted_img = corrupt_image(frame.image, spec, rng.split(2));

    PointCloud lidar_source;
    Tensor cam_img = corrupted_img;
    if (cfg.mode == PipelineMode::Baseline) {
      lidar_source = corrupted_pts;
    } else {
      cam_img = restore_image_stage(frame.image, corrupted_img, cfg, rng.split(3));
      const std::vector<Box2D> range_gt =
          project_boxes_to_range(frame.gt3d, cfg.scene.projection);
      // synthetic head outputs drive the real decode + suppression path
      std::vector<Box2D> guide;
      if (!range_gt.empty()) {
        const HeadOutputs heads =
            heatmap_targets(range_gt, cfg.scene.projection.height, cfg.scene.projection.width);
        guide = nms_2d(decode_center_heatmap(heads, 0.5, 64), 0.5);
      }
      lidar_source = restore_pointcloud(corrupted_pts, cfg.scene.projection, guide,
                                        make_compensator(frame, cfg));
    }

    const BevGrid lidar_grid = voxelize_bev(lidar_source, cfg.scene.extent, cfg.scene.voxel);
    Tensor head_feature = lidar_grid.feature;
    bool fused_calibration = false;

    if (cfg.mode == PipelineMode::Fuse) {
      const Dim HB = lidar_grid.height(), WB = lidar_grid.width();
      BevFeature camera{resample_image(cam_img, HB, WB), BevTag::Camera};
      BevFeature lidar{lidar_grid.feature, BevTag::Lidar};

      AttentionFuseParams fuse_params = AttentionFuseParams::make(camera.data.dim(0));
      if (!cfg.fusion_params.empty()) load_fusion_params(cfg.fusion_params, fuse_params);
      const BevFeature fused = attention_fuse(camera, lidar, fuse_params);

      AlignParams align_params = AlignParams::make(camera.data.dim(0));
      if (!cfg.align_params.empty()) load_align_params(cfg.align_params, align_params);
      const AlignResult aligned =
          align_bidirectional(fused, camera, align_params, rng.split(4), false);
      head_feature = aligned.aligned_lidar.data;
      fused_calibration = cfg.fusion_params.empty() && cfg.align_params.empty();
    }

    const DetectionMaps maps =
        synthesize_detection_maps(head_feature, cfg.detect, fused_calibration, cfg.scene.extent,
                                  cfg.scene.voxel, {0.0, 1.57});
    AnchorConfig anchors;
    anchors.anchor_z = cfg.detect.anchor_z;
    anchors.score_thresh =
        fused_calibration ? cfg.detect.fused_score_thresh : cfg.detect.score_thresh;
    anchors.nms_iou = cfg.detect.nms_iou;
    anchors.extent = cfg.scene.extent;
    anchors.voxel = cfg.scene.voxel;
    outcome.boxes.dets = anchor_decode_3d(maps.score, maps.reg, anchors);

    if (cfg.persist_intermediates)
      persist_frame(cfg, kind, severity, frame.id, corrupted_img, cam_img, lidar_source,
                    head_feature);
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.diagnostic = e.what();
    outcome.boxes.dets.clear();
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// full run

namespace {

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::uint64_t stream_key(std::size_t weather_index, int severity, int frame_id) {
  return (static_cast<std::uint64_t>(weather_index) << 40) ^
         (static_cast<std::uint64_t>(static_cast<unsigned>(severity)) << 32) ^
         static_cast<std::uint64_t>(static_cast<unsigned>(frame_id));
}

}  // namespace

EvalReport run_pipeline(const PipelineConfig& cfg) {
  EvalReport report;
  report.seed = cfg.seed;
  report.mode = pipeline_mode_name(cfg.mode);
  report.frames = cfg.frames;
  report.iou_mode = iou_mode_name(cfg.eval.mode);
  report.iou_thresh = cfg.eval.iou_thresh;

  // clean frames are shared across weathers and severities
  const Rng base(cfg.seed);
  std::vector<Frame> frames(static_cast<std::size_t>(cfg.frames));
  for (int f = 0; f < cfg.frames; ++f) {
    Rng fr = base.split(0xF0000000ull + static_cast<std::uint64_t>(f));
    frames[static_cast<std::size_t>(f)] =
        synth_scene(fr.next_u64(), cfg.objects_per_frame, cfg.scene);
    frames[static_cast<std::size_t>(f)].id = f;
  }

  double overall_sum = 0.0;
  for (std::size_t wi = 0; wi < cfg.weathers.size(); ++wi) {
    WeatherEntry wentry;
    wentry.weather = weather_kind_name(cfg.weathers[wi]);
    std::vector<double> severity_aps;
    for (int severity : cfg.severities) {
      SeverityEntry entry;
      entry.weather = wentry.weather;
      entry.severity = severity;

      std::vector<FrameOutcome> outcomes(frames.size());
      parallel_for(static_cast<int>(frames.size()), cfg.jobs, [&](int f) {
        const Rng stream = base.split(stream_key(wi, severity, f));
        outcomes[static_cast<std::size_t>(f)] =
            process_frame(frames[static_cast<std::size_t>(f)], cfg.weathers[wi], severity, cfg,
                          stream);
      });

      std::vector<FrameBoxes> boxes;
      for (std::size_t f = 0; f < outcomes.size(); ++f) {
        if (!outcomes[f].ok) {
          entry.skipped_frames.push_back(static_cast<int>(f));
          entry.diagnostics.push_back(outcomes[f].diagnostic);
          continue;
        }
        boxes.push_back(outcomes[f].boxes);
      }
      entry.ap_easy = ap_r40_frames(boxes, cfg.eval.iou_thresh, cfg.eval.mode, Difficulty::Easy);
      entry.ap_moderate =
          ap_r40_frames(boxes, cfg.eval.iou_thresh, cfg.eval.mode, Difficulty::Moderate);
      entry.ap_hard = ap_r40_frames(boxes, cfg.eval.iou_thresh, cfg.eval.mode, Difficulty::Hard);
      severity_aps.push_back(entry.ap_moderate);
      wentry.per_severity.push_back(std::move(entry));
    }
    if (severity_aps.size() == 5) {
      wentry.map_moderate = aggregate_severities(severity_aps);
    } else {
      double s = 0.0;
      for (double a : severity_aps) s += a;
      wentry.map_moderate = severity_aps.empty() ? 0.0 : s / static_cast<double>(severity_aps.size());
    }
    overall_sum += wentry.map_moderate;
    report.weather.push_back(std::move(wentry));
  }
  report.overall_map_moderate =
      report.weather.empty() ? 0.0 : overall_sum / static_cast<double>(report.weather.size());
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["tool"] = "awfusion";
  j["report_version"] = 1;
  j["seed"] = report.seed;
  j["mode"] = report.mode;
  j["frames"] = report.frames;
  j["protocol"] = {{"metric", "ap_r40"},
                   {"iou_mode", report.iou_mode},
                   {"iou_thresh", report.iou_thresh},
                   {"difficulty", "moderate"}};
  ordered_json weathers = ordered_json::array();
  for (const WeatherEntry& w : report.weather) {
    ordered_json sev = ordered_json::array();
    for (const SeverityEntry& e : w.per_severity) {
      ordered_json item;
      item["severity"] = e.severity;
      item["ap"] = {{"easy", e.ap_easy}, {"moderate", e.ap_moderate}, {"hard", e.ap_hard}};
      item["skipped_frames"] = e.skipped_frames;
      if (!e.diagnostics.empty()) item["diagnostics"] = e.diagnostics;
      sev.push_back(std::move(item));
    }
    weathers.push_back(ordered_json{
        {"kind", w.weather}, {"per_severity", std::move(sev)}, {"map_moderate", w.map_moderate}});
  }
  j["weather"] = std::move(weathers);
  j["overall_map_moderate"] = report.overall_map_moderate;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// parameter bundles

namespace {

void save_bundle(const std::string& path, const std::vector<ParametricMap*>& maps) {
  std::size_t total = 0;
  for (const ParametricMap* m : maps) total += m->param_count();
  Tensor t({static_cast<Dim>(std::max<std::size_t>(1, total))});
  std::size_t off = 0;
  for (const ParametricMap* m : maps)
    for (double v : m->params()) t[off++] = v;
  save_tensor(path, t);
}

void load_bundle(const std::string& path, const std::vector<ParametricMap*>& maps) {
  const Tensor t = load_tensor(path);
  std::size_t total = 0;
  for (const ParametricMap* m : maps) total += m->param_count();
  if (t.numel() != total)
    throw FormatError("parameter bundle '" + path + "' holds " + std::to_string(t.numel()) +
                      " values, expected " + std::to_string(total));
  std::size_t off = 0;
  for (ParametricMap* m : maps) {
    std::vector<double> p(t.data() + off, t.data() + off + m->param_count());
    off += m->param_count();
    m->set_params(std::move(p));
  }
}

}  // namespace

void save_fusion_params(const std::string& path, AttentionFuseParams& params) {
  save_bundle(path, params.maps());
}

void load_fusion_params(const std::string& path, AttentionFuseParams& params) {
  load_bundle(path, params.maps());
}

void save_align_params(const std::string& path, AlignParams& params) {
  save_bundle(path, params.maps());
}

void load_align_params(const std::string& path, AlignParams& params) {
  load_bundle(path, params.maps());
}

}  // namespace awf
