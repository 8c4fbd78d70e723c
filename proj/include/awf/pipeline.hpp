#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "awf/diffusion.hpp"
#include "awf/eval.hpp"
#include "awf/fusion.hpp"
#include "awf/synth.hpp"
#include "awf/weather.hpp"

namespace awf {

enum class PipelineMode { Baseline, Restore, Fuse };
std::string pipeline_mode_name(PipelineMode m);
PipelineMode pipeline_mode_from_name(const std::string& name);

/// Where a learned component's behavior comes from: all-zero parameters, a
/// ground-truth-peeking oracle (synthetic frames only), or a parameter file.
enum class ComponentKind { Zero, Oracle, File };
std::string component_kind_name(ComponentKind k);
ComponentKind component_kind_from_name(const std::string& name);

struct DiffusionConfig {
  Dim steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  Dim sample_steps = 10;
};

struct RestoreConfig {
  ComponentKind denoiser = ComponentKind::Oracle;
  std::string denoiser_params;
  ComponentKind compensator = ComponentKind::Oracle;
  std::string compensator_params;
};

/// Desk detection head calibration. The occupancy gate is relative to the
/// per-frame max cell count; height and intensity gates are absolute channel
/// values (the height gate rejects ground, the intensity gate rejects
/// weather scatter). The fused_* variants apply in Fuse mode, where the
/// zero-parameter alignment sums the modalities and squares cell-wise, so a
/// base gate g on a per-modality channel becomes (2g)^2 there.
struct DetectConfig {
  double score_thresh = 0.005;
  double occupancy_gate = 0.02;
  double height_gate = 0.475;
  double intensity_gate = 0.42;
  double fused_score_thresh = 1e-4;
  double fused_occupancy_gate = 4e-4;
  double fused_height_gate = 0.9025;
  double fused_intensity_gate = 0.7056;
  double nms_iou = 0.3;
  double anchor_z = -0.82;
};

struct EvalProtocolConfig {
  IouMode mode = IouMode::BevRotated;
  double iou_thresh = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  int frames = 10;
  int objects_per_frame = 3;
  PipelineMode mode = PipelineMode::Fuse;
  std::vector<WeatherKind> weathers = {WeatherKind::Fog};
  std::vector<int> severities = {1, 2, 3, 4, 5};
  SceneConfig scene;
  DiffusionConfig diffusion;
  RestoreConfig restore;
  DetectConfig detect;
  EvalProtocolConfig eval;
  std::string fusion_params;  // empty = zero-initialized
  std::string align_params;   // empty = zero-initialized
  int jobs = 0;               // 0 = hardware concurrency
  bool persist_intermediates = false;
  std::string out_dir;
};

/// Strict JSON parse: unknown keys are rejected at every nesting level.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig default_demo_config();

struct SeverityEntry {
  std::string weather;
  int severity = 0;
  double ap_easy = 0.0, ap_moderate = 0.0, ap_hard = 0.0;
  std::vector<int> skipped_frames;
  std::vector<std::string> diagnostics;
};

struct WeatherEntry {
  std::string weather;
  std::vector<SeverityEntry> per_severity;
  double map_moderate = 0.0;
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string mode;
  int frames = 0;
  std::string iou_mode;
  double iou_thresh = 0.0;
  std::vector<WeatherEntry> weather;
  double overall_map_moderate = 0.0;
};

/// Deterministic serialization: identical reports yield identical bytes.
std::string report_to_json(const EvalReport& report);

/// Score/reg maps for the anchor decoder, synthesized deterministically from
/// a BEV feature: gated cells form 8-connected components; each component
/// contributes one candidate at its occupancy peak, centered on the
/// component's occupancy-weighted centroid, with the anchor rotation chosen
/// by the dominant spread axis.
struct DetectionMaps {
  Tensor score;  // [A,H,W]
  Tensor reg;    // [A*7,H,W]
};
DetectionMaps synthesize_detection_maps(const Tensor& bev_feature, const DetectConfig& dc,
                                        bool fused_calibration, const BevExtent& extent,
                                        const VoxelSize& voxel,
                                        const std::vector<double>& rotations);

/// Continuous range-image footprints of 3D boxes (detection guidance for the
/// restoration stage when driven by ground truth).
std::vector<Box2D> project_boxes_to_range(const std::vector<Box3D>& boxes,
                                          const ProjectionConfig& cfg);

struct FrameOutcome {
  FrameBoxes boxes;
  bool ok = true;
  std::string diagnostic;
};

/// One frame through corrupt -> restore -> fuse/align -> detect for the
/// configured mode. Any stage error marks the frame failed with a diagnostic
/// instead of aborting the run.
FrameOutcome process_frame(const Frame& frame, WeatherKind kind, int severity,
                           const PipelineConfig& cfg, Rng rng);

/// Full sweep over configured weathers, severities and synthetic frames.
EvalReport run_pipeline(const PipelineConfig& cfg);

/// Concatenated parameter persistence for the fusion/alignment map bundles.
void save_fusion_params(const std::string& path, AttentionFuseParams& params);
void load_fusion_params(const std::string& path, AttentionFuseParams& params);
void save_align_params(const std::string& path, AlignParams& params);
void load_align_params(const std::string& path, AlignParams& params);

}  // namespace awf
