#pragma once

#include <array>
#include <string>
#include <vector>

#include "awf/lidar_geom.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Standard difficulty gates; Ignore marks boxes excluded from scoring
/// (dont-care regions, boxes failing every gate).
enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2, Ignore = 3 };

std::string difficulty_name(Difficulty d);

/// Oriented 3D box, sensor frame: center, sizes, yaw about +z in (-pi, pi].
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double yaw = 0.0;
  double score = 0.0;                           // detections
  Difficulty difficulty = Difficulty::Moderate;  // ground truth
  void validate() const;
};

enum class IouMode { Axis2D, BevRotated, Full3D };

/// Axis2D ignores yaw and intersects the (x,y,l,w) footprints; BevRotated
/// clips the yawed footprints (Sutherland-Hodgman); Full3D multiplies the
/// rotated footprint intersection with the z-interval overlap.
double iou(const Box3D& a, const Box3D& b, IouMode mode);

/// Area of the intersection of two convex polygons given as CCW vertex lists.
double convex_intersection_area(const std::vector<std::array<double, 2>>& a,
                                const std::vector<std::array<double, 2>>& b);

/// BEV footprint corners (CCW).
std::vector<std::array<double, 2>> box_corners_bev(const Box3D& b);

/// Detection/GT pair pre-assigned to a frame; matching never crosses frames.
struct FrameBoxes {
  std::vector<Box3D> dets;
  std::vector<Box3D> gts;
};

/// KITTI-style AP with 40 recall positions. Detections match greedily in
/// descending score to the unmatched counted GT of highest IoU >= iou_thresh.
/// GTs harder than eval_difficulty (or Ignore) are dont-care: detections
/// matching only those are dropped from the precision-recall curve.
/// Precision is sampled at recalls {1/40,...,40/40} with max-interpolation.
double ap_r40(const std::vector<Box3D>& dets, const std::vector<Box3D>& gts, double iou_thresh,
              IouMode mode, Difficulty eval_difficulty = Difficulty::Moderate);

/// Same protocol pooled over frames (assignment per frame, one PR curve).
double ap_r40_frames(const std::vector<FrameBoxes>& frames, double iou_thresh, IouMode mode,
                     Difficulty eval_difficulty = Difficulty::Moderate);

/// Arithmetic mean over exactly five severity APs.
double aggregate_severities(const std::vector<double>& per_severity_ap);

/// Anchor grid configuration for the residual decode.
struct AnchorConfig {
  std::array<double, 3> size = {3.9, 1.6, 1.56};  // l, w, h
  std::vector<double> rotations = {0.0, 1.57};
  double anchor_z = -1.0;
  double score_thresh = 0.3;
  double nms_iou = 0.5;
  BevExtent extent;
  VoxelSize voxel;
};

/// Decodes per-cell anchor residuals: scores [A,H,W] gate cells, regs
/// [A*7,H,W] hold (dx,dy,dz,dl,dw,dh,dyaw) with centers normalized by the
/// anchor diagonal, dz by the anchor height, log-ratio sizes and additive
/// yaw. Survivors go through rotated-BEV NMS in descending score.
std::vector<Box3D> anchor_decode_3d(const Tensor& score_map, const Tensor& reg_map,
                                    const AnchorConfig& cfg);

/// Greedy rotated-BEV NMS over Box3D (IoU > thresh suppresses).
std::vector<Box3D> nms_bev(std::vector<Box3D> boxes, double iou_thresh);

double wrap_angle(double a);  // into (-pi, pi]

}  // namespace awf
