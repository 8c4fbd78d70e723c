#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using awf::Dim;
using awf::Tensor;

Tensor random_tensor(std::vector<Dim> shape, awf::Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------
// decode + NMS

namespace {

double rect_iou(const awf::Box2D& a, const awf::Box2D& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace

std::vector<awf::Box2D> suppress_reference(const std::vector<awf::Box2D>& boxes,
                                           double iou_thresh) {
  std::vector<bool> done(boxes.size(), false);
  std::vector<awf::Box2D> kept;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (done[i]) continue;
      if (best == boxes.size() || boxes[i].score > boxes[best].score) best = i;
    }
    if (best == boxes.size()) break;
    done[best] = true;
    bool suppressed = false;
    for (const awf::Box2D& k : kept)
      if (rect_iou(boxes[best], k) > iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(boxes[best]);
  }
  return kept;
}

std::vector<awf::Box2D> decode_and_suppress(const awf::HeadOutputs& heads, double score_thresh,
                                            std::size_t k_max, double iou_thresh) {
  const Dim H = heads.heatmap.dim(1), W = heads.heatmap.dim(2);
  std::vector<awf::Box2D> peaks;
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double s = heads.heatmap.at3(0, i, j);
      if (s < score_thresh) continue;
      bool peak = true;
      for (Dim y = std::max<Dim>(0, i - 1); y <= std::min<Dim>(H - 1, i + 1) && peak; ++y)
        for (Dim x = std::max<Dim>(0, j - 1); x <= std::min<Dim>(W - 1, j + 1); ++x)
          if (heads.heatmap.at3(0, y, x) > s) {
            peak = false;
            break;
          }
      if (!peak) continue;
      awf::Box2D b;
      b.cx = static_cast<double>(j) + heads.offset.at3(0, i, j);
      b.cy = static_cast<double>(i) + heads.offset.at3(1, i, j);
      b.w = heads.size.at3(0, i, j);
      b.h = heads.size.at3(1, i, j);
      b.score = s;
      peaks.push_back(b);
    }
  }
  // stable top-k by repeated max scan
  std::vector<bool> taken(peaks.size(), false);
  std::vector<awf::Box2D> top;
  while (top.size() < k_max) {
    std::size_t best = peaks.size();
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      if (taken[i]) continue;
      if (best == peaks.size() || peaks[i].score > peaks[best].score) best = i;
    }
    if (best == peaks.size()) break;
    taken[best] = true;
    top.push_back(peaks[best]);
  }
  return suppress_reference(top, iou_thresh);
}

// ---------------------------------------------------------------------------
// AP

double ap_r40_reference(const std::vector<awf::Box3D>& dets, const std::vector<awf::Box3D>& gts,
                        double iou_thresh, awf::IouMode mode, awf::Difficulty level) {
  std::vector<bool> counted(gts.size());
  std::size_t n_gt = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    counted[g] = gts[g].difficulty != awf::Difficulty::Ignore &&
                 static_cast<int>(gts[g].difficulty) <= static_cast<int>(level);
    n_gt += counted[g];
  }
  if (n_gt == 0) return 0.0;

  // score-descending order by repeated scan, ties keep input order
  std::vector<bool> used(dets.size(), false);
  std::vector<std::size_t> order;
  for (;;) {
    std::size_t best = dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (used[i]) continue;
      if (best == dets.size() || dets[i].score > dets[best].score) best = i;
    }
    if (best == dets.size()) break;
    used[best] = true;
    order.push_back(best);
  }

  std::vector<bool> matched(gts.size(), false);
  std::vector<int> flags;  // 1 = TP, 0 = FP; dont-care matches skipped
  for (std::size_t oi : order) {
    double best_iou = 0.0, best_ign = 0.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = awf::iou(dets[oi], gts[g], mode);
      if (v < iou_thresh) continue;
      if (counted[g] && !matched[g] && v > best_iou) {
        best_iou = v;
        best_g = g;
      }
      if (!counted[g]) best_ign = std::max(best_ign, v);
    }
    if (best_g < gts.size()) {
      matched[best_g] = true;
      flags.push_back(1);
    } else if (best_ign >= iou_thresh) {
      continue;
    } else {
      flags.push_back(0);
    }
  }

  double ap = 0.0;
  for (int r = 1; r <= 40; ++r) {
    const double target = static_cast<double>(r) / 40.0;
    double best_prec = 0.0;
    int tp = 0;
    for (std::size_t k = 0; k < flags.size(); ++k) {
      tp += flags[k];
      const double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
      const double prec = static_cast<double>(tp) / static_cast<double>(k + 1);
      if (recall >= target) best_prec = std::max(best_prec, prec);
    }
    ap += best_prec;
  }
  return ap / 40.0;
}

// ---------------------------------------------------------------------------
// attention fusion transcription

namespace {

// y = W x + b from a packed [W(out*in), b(out)] parameter vector
void packed_dense(const std::vector<double>& params, Dim out, Dim in, const double* x,
                  double* y) {
  for (Dim o = 0; o < out; ++o) {
    double s = params[static_cast<std::size_t>(out * in + o)];
    for (Dim i = 0; i < in; ++i)
      s += params[static_cast<std::size_t>(o * in + i)] * x[i];
    y[o] = s;
  }
}

std::vector<std::vector<double>> pool_tokens_ref(const Tensor& feat, Dim ph, Dim pw) {
  const Dim C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  std::vector<std::vector<double>> tokens(static_cast<std::size_t>(ph * pw),
                                          std::vector<double>(static_cast<std::size_t>(C)));
  for (Dim i = 0; i < ph; ++i) {
    const Dim r0 = (i * H) / ph;
    const Dim r1 = ((i + 1) * H + ph - 1) / ph;
    for (Dim j = 0; j < pw; ++j) {
      const Dim c0 = (j * W) / pw;
      const Dim c1 = ((j + 1) * W + pw - 1) / pw;
      for (Dim c = 0; c < C; ++c) {
        double sum = 0.0;
        for (Dim r = r0; r < r1; ++r)
          for (Dim q = c0; q < c1; ++q) sum += feat.at3(c, r, q);
        tokens[static_cast<std::size_t>(i * pw + j)][static_cast<std::size_t>(c)] =
            sum / static_cast<double>((r1 - r0) * (c1 - c0));
      }
    }
  }
  return tokens;
}

std::vector<std::vector<double>> project_tokens(const std::vector<std::vector<double>>& tokens,
                                                const awf::TokenLinearMap& map) {
  const Dim in = map.in_dim(), out = map.out_dim();
  std::vector<std::vector<double>> res(tokens.size(), std::vector<double>(static_cast<std::size_t>(out)));
  for (std::size_t n = 0; n < tokens.size(); ++n)
    packed_dense(map.params(), out, in, tokens[n].data(), res[n].data());
  return res;
}

std::vector<std::vector<double>> attend_ref(const std::vector<std::vector<double>>& Q,
                                            const std::vector<std::vector<double>>& K,
                                            const std::vector<std::vector<double>>& V,
                                            Dim heads) {
  const Dim dq = static_cast<Dim>(Q[0].size());
  const Dim dv = static_cast<Dim>(V[0].size());
  const Dim dh = dq / heads, dvh = dv / heads;
  std::vector<std::vector<double>> out(Q.size(), std::vector<double>(static_cast<std::size_t>(dv), 0.0));
  for (Dim h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < Q.size(); ++i) {
      std::vector<double> w(K.size());
      double mx = -HUGE_VAL;
      for (std::size_t k = 0; k < K.size(); ++k) {
        double s = 0.0;
        for (Dim d = 0; d < dh; ++d)
          s += Q[i][static_cast<std::size_t>(h * dh + d)] * K[k][static_cast<std::size_t>(h * dh + d)];
        w[k] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, w[k]);
      }
      double denom = 0.0;
      for (double& v : w) {
        v = std::exp(v - mx);
        denom += v;
      }
      for (Dim d = 0; d < dvh; ++d) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K.size(); ++k)
          acc += w[k] * V[k][static_cast<std::size_t>(h * dvh + d)];
        out[i][static_cast<std::size_t>(h * dvh + d)] = acc / denom;
      }
    }
  }
  return out;
}

}  // namespace

Tensor attention_fuse_reference(const Tensor& camera, const Tensor& lidar,
                                const awf::AttentionFuseParams& p) {
  const Dim C = camera.dim(0), H = camera.dim(1), W = camera.dim(2);
  if (p.pooled_h != H || p.pooled_w != W)
    throw std::invalid_argument("oracle assumes pooled grid == spatial dims");

  auto tc = pool_tokens_ref(camera, p.pooled_h, p.pooled_w);
  auto tl = pool_tokens_ref(lidar, p.pooled_h, p.pooled_w);

  auto a1 =
      project_tokens(attend_ref(project_tokens(tl, *p.q1), project_tokens(tc, *p.k1),
                                project_tokens(tc, *p.v1), p.heads),
                     *p.out1);
  auto tl_hat = tl;
  for (std::size_t n = 0; n < tl.size(); ++n)
    for (std::size_t c = 0; c < tl[n].size(); ++c) tl_hat[n][c] = tl[n][c] + a1[n][c];

  auto a2 =
      project_tokens(attend_ref(project_tokens(tc, *p.q2), project_tokens(tl_hat, *p.k2),
                                project_tokens(tl_hat, *p.v2), p.heads),
                     *p.out2);
  auto tc_hat = tc;
  for (std::size_t n = 0; n < tc.size(); ++n)
    for (std::size_t c = 0; c < tc[n].size(); ++c) tc_hat[n][c] = tc[n][c] + a2[n][c];

  // token MLP on the averaged corrected tokens; the un-pooled correction is
  // combined with the full-resolution modality residuals (the pooled grid
  // equals the spatial grid here, so un-pooling is token placement)
  const std::size_t n_tok = tc.size();
  const auto& mp = p.mlp->params();
  const Dim d = C;
  const Dim hidden = static_cast<Dim>((mp.size() - static_cast<std::size_t>(d)) /
                                      static_cast<std::size_t>(2 * d + 1));
  Tensor out({C, H, W});
  for (std::size_t n = 0; n < n_tok; ++n) {
    std::vector<double> avg(static_cast<std::size_t>(d));
    for (Dim c = 0; c < d; ++c)
      avg[static_cast<std::size_t>(c)] =
          0.5 * (tc_hat[n][static_cast<std::size_t>(c)] + tl_hat[n][static_cast<std::size_t>(c)]);
    std::vector<double> hid(static_cast<std::size_t>(hidden));
    for (Dim o = 0; o < hidden; ++o) {
      double s = mp[static_cast<std::size_t>(hidden * d + o)];
      for (Dim i = 0; i < d; ++i) s += mp[static_cast<std::size_t>(o * d + i)] * avg[static_cast<std::size_t>(i)];
      hid[static_cast<std::size_t>(o)] = std::tanh(s);
    }
    const std::size_t w2_off = static_cast<std::size_t>(hidden * d + hidden);
    const Dim gi = static_cast<Dim>(n) / W;
    const Dim gj = static_cast<Dim>(n) % W;
    for (Dim o = 0; o < d; ++o) {
      double s = mp[w2_off + static_cast<std::size_t>(d * hidden + o)];
      for (Dim i = 0; i < hidden; ++i)
        s += mp[w2_off + static_cast<std::size_t>(o * hidden + i)] * hid[static_cast<std::size_t>(i)];
      out.at3(o, gi, gj) = (s + camera.at3(o, gi, gj)) + lidar.at3(o, gi, gj);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// alignment transcription

namespace {

Tensor conv3_ref(const Tensor& in, const double* K, const double* bias, Dim cin, Dim cout) {
  const Dim H = in.dim(1), W = in.dim(2);
  Tensor out({cout, H, W});
  for (Dim o = 0; o < cout; ++o)
    for (Dim i = 0; i < H; ++i)
      for (Dim j = 0; j < W; ++j) {
        double s = bias ? bias[o] : 0.0;
        for (Dim c = 0; c < cin; ++c)
          for (Dim di = -1; di <= 1; ++di)
            for (Dim dj = -1; dj <= 1; ++dj) {
              const Dim y = i + di, x = j + dj;
              if (y < 0 || y >= H || x < 0 || x >= W) continue;
              s += in.at3(c, y, x) * K[((o * cin + c) * 3 + (di + 1)) * 3 + (dj + 1)];
            }
        out.at3(o, i, j) = s;
      }
  return out;
}

// conv/affine/relu stack with a linear conv head, channels inferred from the
// parameter count for the two-layer nets used in tests.
Tensor cbr_ref(const awf::ParametricMap& map, const Tensor& in, Dim cout_final) {
  const Dim cin = in.dim(0);
  const std::size_t n = map.param_count();
  // n = h*cin*9 + 2h + cout*h*9 + cout  =>  solve for the hidden width
  const Dim hidden = static_cast<Dim>((n - static_cast<std::size_t>(cout_final)) /
                                      static_cast<std::size_t>(cin * 9 + 2 + cout_final * 9));
  const auto& p = map.params();
  Tensor mid = conv3_ref(in, p.data(), nullptr, cin, hidden);
  const double* scale = p.data() + hidden * cin * 9;
  const double* shift = scale + hidden;
  for (Dim c = 0; c < hidden; ++c)
    for (Dim i = 0; i < mid.dim(1); ++i)
      for (Dim j = 0; j < mid.dim(2); ++j) {
        const double v = scale[c] * mid.at3(c, i, j) + shift[c];
        mid.at3(c, i, j) = v > 0.0 ? v : 0.0;
      }
  const double* k2 = shift + hidden;
  const double* b2 = k2 + cout_final * hidden * 9;
  return conv3_ref(mid, k2, b2, hidden, cout_final);
}

Tensor post_conv_ref(const awf::ParametricMap& map, const Tensor& in) {
  if (map.kind() == "identity") return in;
  if (map.kind() == "conv_stack") {
    const Dim c = in.dim(0);
    if (map.param_count() != static_cast<std::size_t>(c * c * 9 + c))
      throw std::invalid_argument("oracle assumes single-layer post convs");
    const auto& p = map.params();
    return conv3_ref(in, p.data(), p.data() + c * c * 9, c, c);
  }
  throw std::invalid_argument("oracle: unsupported post conv kind " + map.kind());
}

Tensor bilinear_ref(const Tensor& feat, const Tensor& offsets) {
  const Dim C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  Tensor out({C, H, W});
  for (Dim i = 0; i < H; ++i)
    for (Dim j = 0; j < W; ++j) {
      double u = (W == 1) ? 0.0
                          : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(W - 1) +
                                2.0 / static_cast<double>(W - 1) * offsets.at3(0, i, j);
      double v = (H == 1) ? 0.0
                          : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(H - 1) +
                                2.0 / static_cast<double>(H - 1) * offsets.at3(1, i, j);
      u = std::clamp(u, -1.0, 1.0);
      v = std::clamp(v, -1.0, 1.0);
      const double x = (W == 1) ? 0.0 : (u + 1.0) / 2.0 * static_cast<double>(W - 1);
      const double y = (H == 1) ? 0.0 : (v + 1.0) / 2.0 * static_cast<double>(H - 1);
      const Dim x0 = static_cast<Dim>(std::floor(x)), y0 = static_cast<Dim>(std::floor(y));
      const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
      auto val = [&](Dim c, Dim yy, Dim xx) {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? 0.0 : feat.at3(c, yy, xx);
      };
      for (Dim c = 0; c < C; ++c)
        out.at3(c, i, j) = (1.0 - fy) * ((1.0 - fx) * val(c, y0, x0) + fx * val(c, y0, x0 + 1)) +
                           fy * ((1.0 - fx) * val(c, y0 + 1, x0) + fx * val(c, y0 + 1, x0 + 1));
    }
  return out;
}

Tensor concat_ref(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

}  // namespace

Tensor align_reference(const Tensor& fused_lidar, const Tensor& camera, const awf::AlignParams& p) {
  // stage 1
  const Tensor off1 = cbr_ref(*p.offset_net1, concat_ref(fused_lidar, camera), 2);
  const Tensor w1 = bilinear_ref(camera, off1);
  Tensor adj1({camera.dim(0), camera.dim(1), camera.dim(2)});
  for (std::size_t i = 0; i < adj1.numel(); ++i) adj1[i] = w1[i] * camera[i];
  const Tensor cam_aligned = post_conv_ref(*p.post_conv1, adj1);

  // stage 2
  const Tensor off2 = cbr_ref(*p.offset_net2, concat_ref(cam_aligned, fused_lidar), 2);
  const Tensor w2 = bilinear_ref(fused_lidar, off2);
  Tensor adj2({fused_lidar.dim(0), fused_lidar.dim(1), fused_lidar.dim(2)});
  for (std::size_t i = 0; i < adj2.numel(); ++i) adj2[i] = w2[i] * fused_lidar[i];
  return post_conv_ref(*p.post_conv2, adj2);
}

}  // namespace oracle
