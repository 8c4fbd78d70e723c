#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written as straight-line loops over raw values and must
// not call the library routines it is checking.

#include <vector>

#include "awf/eval.hpp"
#include "awf/fusion.hpp"
#include "awf/point_restore.hpp"
#include "awf/rng.hpp"
#include "awf/tensor.hpp"

namespace oracle {

awf::Tensor random_tensor(std::vector<awf::Dim> shape, awf::Rng& rng, double lo, double hi);

/// Peak extraction + top-k + greedy suppression, re-derived with exhaustive
/// scans and its own rectangle IoU.
std::vector<awf::Box2D> decode_and_suppress(const awf::HeadOutputs& heads, double score_thresh,
                                            std::size_t k_max, double iou_thresh);

/// Greedy suppression only (descending score, exhaustive max scan).
std::vector<awf::Box2D> suppress_reference(const std::vector<awf::Box2D>& boxes,
                                           double iou_thresh);

/// 40-point interpolated AP with brute-force matching, re-derived
/// independently of the library's bookkeeping. Pairwise IoU values come from
/// the passed callable.
double ap_r40_reference(const std::vector<awf::Box3D>& dets, const std::vector<awf::Box3D>& gts,
                        double iou_thresh, awf::IouMode mode, awf::Difficulty level);

/// Straight-line transcription of the two-stage attention fusion (pooling,
/// projections, per-head attention, MLP, residuals, un-pooling).
awf::Tensor attention_fuse_reference(const awf::Tensor& camera, const awf::Tensor& lidar,
                                     const awf::AttentionFuseParams& p);

/// Straight-line transcription of the two-stage alignment cascade in
/// inference mode (offset nets, grid construction, bilinear sampling,
/// self-weighting, post convs).
awf::Tensor align_reference(const awf::Tensor& fused_lidar, const awf::Tensor& camera,
                            const awf::AlignParams& p);

}  // namespace oracle
