#pragma once

#include <memory>

#include "awf/maps.hpp"
#include "awf/ops.hpp"
#include "awf/rng.hpp"
#include "awf/tensor.hpp"

namespace awf {

enum class BevTag { Camera, Lidar, Fused, Aligned };

/// BEV feature map with a modality tag; tags follow the pipeline order
/// camera/lidar -> fused -> aligned.
struct BevFeature {
  Tensor data;  // [C, H_B, W_B]
  BevTag tag = BevTag::Lidar;
};

/// Multi-head scaled dot-product attention on already-projected tokens.
/// Q: [Nq,D], K: [Nk,D], V: [Nk,Dv]; D and Dv must be divisible by heads.
/// Per head, softmax(Q Kt / sqrt(d_head)) V; heads are concatenated (output
/// projection is the caller's).
Tensor cross_attention(const Tensor& Q, const Tensor& K, const Tensor& V, Dim heads);

/// Two-stage asymmetric bidirectional cross-attention fusion over pooled BEV
/// tokens, with dual residual connections from both input modalities.
struct AttentionFuseParams {
  Dim heads = 4;
  Dim pooled_h = 8, pooled_w = 8;
  Dim proj_dim = 32;
  // stage 1: lidar tokens query camera tokens
  std::shared_ptr<TokenLinearMap> q1, k1, v1, out1;
  // stage 2: camera tokens query the corrected lidar tokens
  std::shared_ptr<TokenLinearMap> q2, k2, v2, out2;
  std::shared_ptr<TokenMlpMap> mlp;

  static AttentionFuseParams make(Dim channels, Dim heads = 4, Dim pooled_h = 8,
                                  Dim pooled_w = 8, Dim proj_dim = 32, Dim mlp_hidden = 32);
  void validate(Dim channels) const;
  std::vector<ParametricMap*> maps();
};

/// Pools a [C,H,W] feature to a [h_p*w_p, C] token matrix (tokens row-major).
Tensor pool_to_tokens(const Tensor& feat, Dim pooled_h, Dim pooled_w);

/// Inverse placement: bilinear un-pooling of tokens back to [C,H,W].
/// Identity (plain copy) when the pooled grid matches the spatial dims.
Tensor unpool_tokens(const Tensor& tokens, Dim pooled_h, Dim pooled_w, Dim out_h, Dim out_w);

/// Fused feature: attention runs on pooled tokens (stage 1 corrects lidar
/// with camera, stage 2 corrects camera with the corrected lidar), a token
/// MLP refines the average of both corrected streams, and the result is
/// bilinearly un-pooled and combined with full-resolution residuals from
/// both raw inputs. With all parameters zero this is exactly camera + lidar
/// at any grid size.
BevFeature attention_fuse(const BevFeature& camera, const BevFeature& lidar,
                          const AttentionFuseParams& p);

/// Converts per-cell offsets [2,H,W] (channel 0 = u/width, 1 = v/height, in
/// cells) into a normalized align-corners sampling grid, clamped to [-1,1].
Tensor offsets_to_grid(const Tensor& offsets);

/// Chain rule through offsets_to_grid: grid gradient -> offsets gradient
/// (zero where the grid was clamped).
Tensor offsets_to_grid_backward(const Tensor& offsets, const Tensor& grid_grad);

struct AlignStageResult {
  BevFeature aligned;
  Tensor offsets;   // [2,H,W]
  Tensor weights;   // sampled spatial weights before the product
  Tensor adjusted;  // weights (.) to_align, the post-conv input
};

/// One alignment stage: offsets from the channel concat of (query_ref,
/// to_align); spatial weights by sampling to_align at the offset grid;
/// element-wise product with to_align; then the post conv.
AlignStageResult align_stage(const BevFeature& query_ref, const BevFeature& to_align,
                             const ParametricMap& offset_net, const ParametricMap& post_conv);

/// Cascaded two-stage bidirectional alignment parameters. The offset nets map
/// the [2C,H,W] concat to [2,H,W]; supervision_map fuses clean features into
/// the alignment target; stage1_loss_conv realizes the stage-1 comparison
/// feature as a conv over the concat of the (noised) stage-1 output and the
/// fused lidar input.
struct AlignParams {
  std::shared_ptr<ParametricMap> offset_net1, offset_net2;
  std::shared_ptr<ParametricMap> post_conv1, post_conv2;
  std::shared_ptr<ParametricMap> supervision_map;
  std::shared_ptr<ParametricMap> stage1_loss_conv;
  double lambda1 = 0.3, lambda2 = 0.7;

  static AlignParams make(Dim channels, Dim hidden = 8);
  std::vector<ParametricMap*> maps();
};

struct AlignResult {
  BevFeature aligned_lidar;       // final aligned feature
  BevFeature stage1_aligned_cam;  // stage-1 output before noise
  Tensor offsets1, offsets2;
  Tensor stage1_query;  // (shifted) fused lidar fed to stage 1
  Tensor stage2_query;  // (noised) stage-1 output fed to stage 2
};

/// Training mode simulates misalignment: stage 1 sees the fused lidar under a
/// random integer shift in [-2,2] cells per axis; stage 2 sees the stage-1
/// output translated by Gaussian offset noise (sigma 0.5 cells per axis).
/// Inference applies the learned offsets directly: no shifts, no noise, no
/// randomness consumed, bit-reproducible.
AlignResult align_bidirectional(const BevFeature& fused_lidar, const BevFeature& camera,
                                const AlignParams& p, Rng rng, bool train_mode);

/// Alignment target from clean modality features: supervision_map applied to
/// concat(lidar_clean, camera_clean); output channels must match the lidar's.
Tensor build_supervision(const Tensor& lidar_clean, const Tensor& camera_clean,
                         const ParametricMap& supervision_map);

/// Stage-1 comparison feature for the alignment loss:
/// stage1_loss_conv(concat(stage2_query, fused_lidar)).
Tensor stage1_loss_features(const AlignResult& result, const Tensor& fused_lidar,
                            const ParametricMap& stage1_loss_conv);

/// lambda1 * MSE(supervision, stage1 conv out) + lambda2 * MSE(supervision,
/// aligned lidar), means over all cells.
double alignment_loss(const Tensor& supervision, const Tensor& stage1_conv_out,
                      const Tensor& aligned_lidar, double lambda1, double lambda2);

/// Integer-cell translation with zero fill (misalignment simulation helper).
Tensor shift_cells(const Tensor& feat, Dim di, Dim dj);

/// Subpixel translation by a constant (du,dv) cell offset via grid sampling.
Tensor translate_bilinear(const Tensor& feat, double du, double dv);

}  // namespace awf
