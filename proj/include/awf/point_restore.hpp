#pragma once

#include <functional>
#include <vector>

#include "awf/lidar_geom.hpp"
#include "awf/maps.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Axis-aligned 2D detection box in pixel coordinates.
struct Box2D {
  double cx = 0.0, cy = 0.0;
  double w = 0.0, h = 0.0;
  double score = 0.0;
  void validate() const;
};

/// Intersection-over-union of two axis-aligned boxes.
double box2d_iou(const Box2D& a, const Box2D& b);

/// Outputs of the three parallel detection heads on an H'xW' feature grid:
/// heatmap in [0,1] (sigmoid), sizes >= 0 (relu), raw center offsets.
struct HeadOutputs {
  Tensor heatmap;  // [1,H,W]
  Tensor size;     // [2,H,W] (w,h)
  Tensor offset;   // [2,H,W] (dx,dy)
  void validate() const;
};

/// Splits a raw [5,H,W] head tensor into activated HeadOutputs
/// (sigmoid / relu / identity on channels 0 / 1-2 / 3-4).
HeadOutputs head_from_raw(const Tensor& raw);

/// Chain rule through head_from_raw: gradients w.r.t. the raw tensor.
Tensor head_raw_backward(const Tensor& raw, const HeadOutputs& grads);

/// Extracts boxes at heatmap peaks: cells equal to their 3x3 neighborhood max
/// with score >= score_thresh, top k_max by score (ties keep row-major order).
/// Box center = cell + offset, size from the size head, score = heatmap value.
std::vector<Box2D> decode_center_heatmap(const HeadOutputs& heads, double score_thresh,
                                         std::size_t k_max);

/// Greedy descending-score suppression with axis-aligned IoU; a box is
/// dropped when its IoU with a kept box exceeds iou_thresh. Score ties keep
/// input order.
std::vector<Box2D> nms_2d(std::vector<Box2D> boxes, double iou_thresh);

/// Renders training targets for a set of ground-truth boxes: a Gaussian splat
/// per center with radius max(1, floor(min(w,h)/6)), size and offset targets
/// written at the center cell only. Boxes outside the grid are an error.
HeadOutputs heatmap_targets(const std::vector<Box2D>& gt, Dim height, Dim width);

/// Detection training loss: penalty-reduced focal loss (alpha=2, beta=4) on
/// the heatmap, normalized per cell, plus L1 on size/offset at target center
/// cells. The heatmap prediction is clamped to [1e-4, 1-1e-4] inside the log.
double detection_loss(const HeadOutputs& pred, const HeadOutputs& targets);

/// Gradients of detection_loss w.r.t. the activated head outputs.
HeadOutputs detection_loss_grad(const HeadOutputs& pred, const HeadOutputs& targets);

/// Region of a range image selected by a detection box, clipped to the grid.
struct RegionPatch {
  Tensor values;     // [h,w] range values (0 where the pixel is invalid)
  Tensor intensity;  // [h,w]
  Dim y0 = 0, x0 = 0;  // anchor of the clipped window
};

/// Clips the box to an integer window and copies it. Throws when the box does
/// not intersect the image.
RegionPatch extract_region(const RangeImage& ri, const Box2D& box);

/// 2x-upsampled patch with originals on even rows/columns and a mask marking
/// them; all other cells are zero until compensated.
struct RestorePatch {
  Tensor values;  // [2h,2w]
  Tensor mask;    // [2h,2w], 1 exactly at (even,even)
};

RestorePatch upsample_with_mask(const Tensor& patch);

/// values (.) mask + fill (.) (1-mask), selecting per cell so masked-in
/// originals are preserved bit-exactly regardless of the fill values.
Tensor compose_restore_values(const RestorePatch& rp, const Tensor& fill);

/// Same, with the fill predicted by a compensator map from rp.values.
Tensor compose_restore(const RestorePatch& rp, const ParametricMap& compensator);

/// L1 distance of forward finite differences (horizontal + vertical); the
/// last column/row is dropped by the difference operator.
double gradient_loss(const Tensor& gen, const Tensor& gt);

/// d gradient_loss / d gen.
Tensor gradient_loss_grad(const Tensor& gen, const Tensor& gt);

/// gradient_loss + mean L1 + L1 between feat_fn(gen) and feat_fn(gt).
double restoration_loss(const Tensor& gen, const Tensor& gt, const ParametricMap& feat_fn);

/// d restoration_loss / d gen; needs an analytic-gradient feat_fn.
Tensor restoration_loss_grad(const Tensor& gen, const Tensor& gt, const ParametricMap& feat_fn);

/// Frozen fixed-seed conv feature map standing in for a pretrained perceptual
/// network in restoration_loss.
std::shared_ptr<ParametricMap> default_perceptual_map();

/// Fill predictor for a 2x-upsampled range patch; receives the zero-padded
/// patch and its window anchor on the (unupsampled) range grid.
using CompensatorFn = std::function<Tensor(const Tensor& upsampled, Dim y0, Dim x0)>;

/// Wraps a patch-to-patch ParametricMap as a CompensatorFn.
CompensatorFn compensator_from_map(std::shared_ptr<ParametricMap> map);

/// Detection-guided densification: project, then per box (descending score)
/// extract / upsample / compensate, and emit compensated cells as new points
/// on a 2x-resolution grid. Original pixels keep their 1x pixel-center
/// geometry, so with no boxes the result equals unproject(project(points)).
/// Compensated cells outside (0, r_max] are discarded as implausible; cells
/// claimed by a higher-scoring box are not rewritten.
PointCloud restore_pointcloud(const PointCloud& points, const ProjectionConfig& cfg,
                              std::vector<Box2D> boxes, const CompensatorFn& compensator,
                              double r_max = 120.0);

}  // namespace awf
