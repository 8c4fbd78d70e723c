#include "awf/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace awf {

Tensor cross_attention(const Tensor& Q, const Tensor& K, const Tensor& V, Dim heads) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
    throw std::invalid_argument("cross_attention expects [N,D] token matrices");
  if (K.dim(0) != V.dim(0))
    throw std::invalid_argument("cross_attention: K and V token counts differ");
  if (Q.dim(1) != K.dim(1))
    throw std::invalid_argument("cross_attention: Q and K dims differ");
  if (heads < 1 || Q.dim(1) % heads != 0 || V.dim(1) % heads != 0)
    throw std::invalid_argument("cross_attention: dims must be divisible by heads");

  const Dim Nq = Q.dim(0), Nk = K.dim(0);
  const Dim dh = Q.dim(1) / heads;
  const Dim dv = V.dim(1) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out({Nq, V.dim(1)});
  std::vector<double> scores(static_cast<std::size_t>(Nk));
  for (Dim h = 0; h < heads; ++h) {
    for (Dim i = 0; i < Nq; ++i) {
      double mx = -HUGE_VAL;
      for (Dim k = 0; k < Nk; ++k) {
        double s = 0.0;
        for (Dim d = 0; d < dh; ++d) s += Q.at2(i, h * dh + d) * K.at2(k, h * dh + d);
        s *= scale;
        scores[static_cast<std::size_t>(k)] = s;
        mx = std::max(mx, s);
      }
      double denom = 0.0;
      for (Dim k = 0; k < Nk; ++k) {
        const double e = std::exp(scores[static_cast<std::size_t>(k)] - mx);
        scores[static_cast<std::size_t>(k)] = e;
        denom += e;
      }
      for (Dim d = 0; d < dv; ++d) {
        double acc = 0.0;
        for (Dim k = 0; k < Nk; ++k)
          acc += scores[static_cast<std::size_t>(k)] * V.at2(k, h * dv + d);
        out.at2(i, h * dv + d) = acc / denom;
      }
    }
  }
  return out;
}

AttentionFuseParams AttentionFuseParams::make(Dim channels, Dim heads, Dim pooled_h,
                                              Dim pooled_w, Dim proj_dim, Dim mlp_hidden) {
  AttentionFuseParams p;
  p.heads = heads;
  p.pooled_h = pooled_h;
  p.pooled_w = pooled_w;
  p.proj_dim = proj_dim;
  p.q1 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.k1 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.v1 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.out1 = std::make_shared<TokenLinearMap>(proj_dim, channels);
  p.q2 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.k2 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.v2 = std::make_shared<TokenLinearMap>(channels, proj_dim);
  p.out2 = std::make_shared<TokenLinearMap>(proj_dim, channels);
  p.mlp = std::make_shared<TokenMlpMap>(channels, mlp_hidden);
  p.validate(channels);
  return p;
}

void AttentionFuseParams::validate(Dim channels) const {
  if (!q1 || !k1 || !v1 || !out1 || !q2 || !k2 || !v2 || !out2 || !mlp)
    throw std::invalid_argument("attention fuse: missing projection maps");
  if (heads < 1 || proj_dim % heads != 0)
    throw std::invalid_argument("attention fuse: head count must divide the projection dim");
  if (pooled_h < 1 || pooled_w < 1)
    throw std::invalid_argument("attention fuse: pooled grid must be positive");
  if (q1->in_dim() != channels || out1->out_dim() != channels)
    throw std::invalid_argument("attention fuse: projection dims do not match channels");
}

std::vector<ParametricMap*> AttentionFuseParams::maps() {
  return {q1.get(), k1.get(), v1.get(), out1.get(),
          q2.get(), k2.get(), v2.get(), out2.get(), mlp.get()};
}

Tensor pool_to_tokens(const Tensor& feat, Dim pooled_h, Dim pooled_w) {
  const Tensor pooled = adaptive_avg_pool(feat, pooled_h, pooled_w);
  const Dim C = pooled.dim(0);
  Tensor tokens({pooled_h * pooled_w, C});
  for (Dim i = 0; i < pooled_h; ++i)
    for (Dim j = 0; j < pooled_w; ++j)
      for (Dim c = 0; c < C; ++c) tokens.at2(i * pooled_w + j, c) = pooled.at3(c, i, j);
  return tokens;
}

Tensor unpool_tokens(const Tensor& tokens, Dim pooled_h, Dim pooled_w, Dim out_h, Dim out_w) {
  if (tokens.rank() != 2 || tokens.dim(0) != pooled_h * pooled_w)
    throw std::invalid_argument("unpool_tokens: token count mismatch");
  const Dim C = tokens.dim(1);
  Tensor grid_feat({C, pooled_h, pooled_w});
  for (Dim i = 0; i < pooled_h; ++i)
    for (Dim j = 0; j < pooled_w; ++j)
      for (Dim c = 0; c < C; ++c) grid_feat.at3(c, i, j) = tokens.at2(i * pooled_w + j, c);
  if (pooled_h == out_h && pooled_w == out_w) return grid_feat;

  Tensor grid({out_h, out_w, 2});
  for (Dim i = 0; i < out_h; ++i) {
    const double v = (out_h == 1) ? 0.0
                                  : -1.0 + 2.0 * static_cast<double>(i) /
                                               static_cast<double>(out_h - 1);
    for (Dim j = 0; j < out_w; ++j) {
      const double u = (out_w == 1) ? 0.0
                                    : -1.0 + 2.0 * static_cast<double>(j) /
                                                 static_cast<double>(out_w - 1);
      grid.at3(i, j, 0) = u;
      grid.at3(i, j, 1) = v;
    }
  }
  return grid_sample_bilinear(grid_feat, grid);
}

BevFeature attention_fuse(const BevFeature& camera, const BevFeature& lidar,
                          const AttentionFuseParams& p) {
  if (camera.tag != BevTag::Camera || lidar.tag != BevTag::Lidar)
    throw std::invalid_argument("attention_fuse expects (camera, lidar) tagged features");
  if (!camera.data.same_shape(lidar.data))
    throw std::invalid_argument("attention_fuse: feature dims differ");
  const Dim C = camera.data.dim(0);
  const Dim H = camera.data.dim(1), W = camera.data.dim(2);
  p.validate(C);

  const Tensor tc = pool_to_tokens(camera.data, p.pooled_h, p.pooled_w);
  const Tensor tl = pool_to_tokens(lidar.data, p.pooled_h, p.pooled_w);

  // stage 1: lidar queries camera
  const Tensor a1 = p.out1->apply(
      cross_attention(p.q1->apply(tl), p.k1->apply(tc), p.v1->apply(tc), p.heads));
  const Tensor tl_hat = tl + a1;
  // stage 2: camera queries the corrected lidar
  const Tensor a2 = p.out2->apply(
      cross_attention(p.q2->apply(tc), p.k2->apply(tl_hat), p.v2->apply(tl_hat), p.heads));
  const Tensor tc_hat = tc + a2;

  // the attention/MLP correction lives in token space; the dual modality
  // residuals stay at full resolution, so zero parameters reduce to
  // camera + lidar exactly at any grid size
  const Tensor correction = p.mlp->apply(0.5 * (tc_hat + tl_hat));
  const Tensor upsampled = unpool_tokens(correction, p.pooled_h, p.pooled_w, H, W);
  return BevFeature{(upsampled + camera.data) + lidar.data, BevTag::Fused};
}

Tensor offsets_to_grid(const Tensor& offsets) {
  if (offsets.rank() != 3 || offsets.dim(0) != 2)
    throw std::invalid_argument("offsets_to_grid expects [2,H,W]");
  ensure_finite(offsets, "offsets_to_grid");
  const Dim H = offsets.dim(1), W = offsets.dim(2);
  Tensor grid({H, W, 2});
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double su = (W == 1) ? 0.0 : 2.0 / static_cast<double>(W - 1);
      const double sv = (H == 1) ? 0.0 : 2.0 / static_cast<double>(H - 1);
      const double u_id =
          (W == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(W - 1);
      const double v_id =
          (H == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(H - 1);
      grid.at3(i, j, 0) = std::clamp(u_id + su * offsets.at3(0, i, j), -1.0, 1.0);
      grid.at3(i, j, 1) = std::clamp(v_id + sv * offsets.at3(1, i, j), -1.0, 1.0);
    }
  }
  return grid;
}

Tensor offsets_to_grid_backward(const Tensor& offsets, const Tensor& grid_grad) {
  const Dim H = offsets.dim(1), W = offsets.dim(2);
  Tensor g({2, H, W});
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double su = (W == 1) ? 0.0 : 2.0 / static_cast<double>(W - 1);
      const double sv = (H == 1) ? 0.0 : 2.0 / static_cast<double>(H - 1);
      const double u_id =
          (W == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(W - 1);
      const double v_id =
          (H == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(H - 1);
      const double u = u_id + su * offsets.at3(0, i, j);
      const double v = v_id + sv * offsets.at3(1, i, j);
      g.at3(0, i, j) = (u > -1.0 && u < 1.0) ? grid_grad.at3(i, j, 0) * su : 0.0;
      g.at3(1, i, j) = (v > -1.0 && v < 1.0) ? grid_grad.at3(i, j, 1) * sv : 0.0;
    }
  }
  return g;
}

AlignStageResult align_stage(const BevFeature& query_ref, const BevFeature& to_align,
                             const ParametricMap& offset_net, const ParametricMap& post_conv) {
  if (!query_ref.data.same_shape(to_align.data))
    throw std::invalid_argument("align_stage: feature dims differ");
  AlignStageResult r;
  r.offsets = offset_net.apply(concat_channels(query_ref.data, to_align.data));
  if (r.offsets.rank() != 3 || r.offsets.dim(0) != 2)
    throw std::invalid_argument("align_stage: offset net must emit [2,H,W]");
  r.weights = grid_sample_bilinear(to_align.data, offsets_to_grid(r.offsets));
  r.adjusted = hadamard(r.weights, to_align.data);
  r.aligned = BevFeature{post_conv.apply(r.adjusted), BevTag::Aligned};
  return r;
}

AlignParams AlignParams::make(Dim channels, Dim hidden) {
  AlignParams p;
  p.offset_net1 = std::make_shared<CbrStackMap>(std::vector<Dim>{2 * channels, hidden, 2});
  p.offset_net2 = std::make_shared<CbrStackMap>(std::vector<Dim>{2 * channels, hidden, 2});
  p.post_conv1 = std::make_shared<IdentityMap>();
  p.post_conv2 = std::make_shared<IdentityMap>();
  p.supervision_map = std::make_shared<CbrStackMap>(std::vector<Dim>{2 * channels, hidden, channels});
  p.stage1_loss_conv = std::make_shared<CbrStackMap>(std::vector<Dim>{2 * channels, hidden, channels});
  return p;
}

std::vector<ParametricMap*> AlignParams::maps() {
  return {offset_net1.get(), offset_net2.get(),     post_conv1.get(),
          post_conv2.get(),  supervision_map.get(), stage1_loss_conv.get()};
}

Tensor shift_cells(const Tensor& feat, Dim di, Dim dj) {
  if (feat.rank() != 3) throw std::invalid_argument("shift_cells expects [C,H,W]");
  const Dim C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  Tensor out({C, H, W});
  for (Dim c = 0; c < C; ++c)
    for (Dim i = 0; i < H; ++i)
      for (Dim j = 0; j < W; ++j) {
        const Dim si = i - di, sj = j - dj;
        if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
        out.at3(c, i, j) = feat.at3(c, si, sj);
      }
  return out;
}

Tensor translate_bilinear(const Tensor& feat, double du, double dv) {
  Tensor offsets({2, feat.dim(1), feat.dim(2)});
  for (Dim i = 0; i < feat.dim(1); ++i)
    for (Dim j = 0; j < feat.dim(2); ++j) {
      offsets.at3(0, i, j) = du;
      offsets.at3(1, i, j) = dv;
    }
  return grid_sample_bilinear(feat, offsets_to_grid(offsets));
}

AlignResult align_bidirectional(const BevFeature& fused_lidar, const BevFeature& camera,
                                const AlignParams& p, Rng rng, bool train_mode) {
  if (fused_lidar.tag != BevTag::Fused && fused_lidar.tag != BevTag::Lidar)
    throw std::invalid_argument("align_bidirectional expects a fused (or lidar) first input");
  if (camera.tag != BevTag::Camera)
    throw std::invalid_argument("align_bidirectional expects a camera second input");
  if (!fused_lidar.data.same_shape(camera.data))
    throw std::invalid_argument("align_bidirectional: feature dims differ");
  if (!p.offset_net1 || !p.offset_net2 || !p.post_conv1 || !p.post_conv2)
    throw std::invalid_argument("align_bidirectional: missing maps");

  AlignResult r;

  // stage 1: align the camera feature against the (optionally shifted) lidar
  Tensor stage1_query = fused_lidar.data;
  if (train_mode) {
    const Dim di = rng.uniform_int(-2, 2);
    const Dim dj = rng.uniform_int(-2, 2);
    stage1_query = shift_cells(stage1_query, di, dj);
  }
  r.stage1_query = stage1_query;
  const AlignStageResult s1 =
      align_stage(BevFeature{stage1_query, fused_lidar.tag}, camera, *p.offset_net1,
                  *p.post_conv1);
  r.stage1_aligned_cam = BevFeature{s1.aligned.data, BevTag::Aligned};
  r.offsets1 = s1.offsets;

  // stage 2: residual-misalignment noise, then align the lidar side
  Tensor stage2_query = s1.aligned.data;
  if (train_mode) {
    const double du = 0.5 * rng.normal();
    const double dv = 0.5 * rng.normal();
    stage2_query = translate_bilinear(stage2_query, du, dv);
  }
  r.stage2_query = stage2_query;
  const AlignStageResult s2 =
      align_stage(BevFeature{stage2_query, BevTag::Camera}, fused_lidar, *p.offset_net2,
                  *p.post_conv2);
  r.aligned_lidar = s2.aligned;
  r.offsets2 = s2.offsets;
  return r;
}

Tensor build_supervision(const Tensor& lidar_clean, const Tensor& camera_clean,
                         const ParametricMap& supervision_map) {
  if (lidar_clean.rank() != 3 || camera_clean.rank() != 3 ||
      lidar_clean.dim(1) != camera_clean.dim(1) || lidar_clean.dim(2) != camera_clean.dim(2))
    throw std::invalid_argument("build_supervision: feature dims differ");
  Tensor out = supervision_map.apply(concat_channels(lidar_clean, camera_clean));
  if (out.dim(0) != lidar_clean.dim(0))
    throw std::invalid_argument("build_supervision: output channels must match lidar channels");
  return out;
}

Tensor stage1_loss_features(const AlignResult& result, const Tensor& fused_lidar,
                            const ParametricMap& stage1_loss_conv) {
  return stage1_loss_conv.apply(concat_channels(result.stage2_query, fused_lidar));
}

double alignment_loss(const Tensor& supervision, const Tensor& stage1_conv_out,
                      const Tensor& aligned_lidar, double lambda1, double lambda2) {
  if (!supervision.same_shape(stage1_conv_out) || !supervision.same_shape(aligned_lidar))
    throw std::invalid_argument("alignment_loss: shape mismatch");
  const double n = static_cast<double>(supervision.numel());
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < supervision.numel(); ++i) {
    const double d1 = supervision[i] - stage1_conv_out[i];
    const double d2 = supervision[i] - aligned_lidar[i];
    l1 += d1 * d1;
    l2 += d2 * d2;
  }
  return lambda1 * (l1 / n) + lambda2 * (l2 / n);
}

}  // namespace awf
