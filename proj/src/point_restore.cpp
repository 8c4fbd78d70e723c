#include "awf/point_restore.hpp"

#include <algorithm>
#include <cmath>

namespace awf {

void Box2D::validate() const {
  if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("box2d: sides must be positive");
  if (!(score >= 0.0 && score <= 1.0))
    throw std::invalid_argument("box2d: score must be in [0,1]");
}

double box2d_iou(const Box2D& a, const Box2D& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void HeadOutputs::validate() const {
  if (heatmap.rank() != 3 || heatmap.dim(0) != 1)
    throw std::invalid_argument("head outputs: heatmap must be [1,H,W]");
  const Dim H = heatmap.dim(1), W = heatmap.dim(2);
  auto check2 = [&](const Tensor& t, const char* name) {
    if (t.rank() != 3 || t.dim(0) != 2 || t.dim(1) != H || t.dim(2) != W)
      throw std::invalid_argument(std::string("head outputs: ") + name + " must be [2,H,W]");
  };
  check2(size, "size");
  check2(offset, "offset");
}

HeadOutputs head_from_raw(const Tensor& raw) {
  if (raw.rank() != 3 || raw.dim(0) != 5)
    throw std::invalid_argument("head_from_raw expects [5,H,W]");
  const Dim H = raw.dim(1), W = raw.dim(2);
  HeadOutputs h{Tensor({1, H, W}), Tensor({2, H, W}), Tensor({2, H, W})};
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      h.heatmap.at3(0, i, j) = 1.0 / (1.0 + std::exp(-raw.at3(0, i, j)));
      h.size.at3(0, i, j) = std::max(0.0, raw.at3(1, i, j));
      h.size.at3(1, i, j) = std::max(0.0, raw.at3(2, i, j));
      h.offset.at3(0, i, j) = raw.at3(3, i, j);
      h.offset.at3(1, i, j) = raw.at3(4, i, j);
    }
  }
  return h;
}

Tensor head_raw_backward(const Tensor& raw, const HeadOutputs& grads) {
  const Dim H = raw.dim(1), W = raw.dim(2);
  Tensor g({5, H, W});
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double sig = 1.0 / (1.0 + std::exp(-raw.at3(0, i, j)));
      g.at3(0, i, j) = grads.heatmap.at3(0, i, j) * sig * (1.0 - sig);
      g.at3(1, i, j) = raw.at3(1, i, j) > 0.0 ? grads.size.at3(0, i, j) : 0.0;
      g.at3(2, i, j) = raw.at3(2, i, j) > 0.0 ? grads.size.at3(1, i, j) : 0.0;
      g.at3(3, i, j) = grads.offset.at3(0, i, j);
      g.at3(4, i, j) = grads.offset.at3(1, i, j);
    }
  }
  return g;
}

std::vector<Box2D> decode_center_heatmap(const HeadOutputs& heads, double score_thresh,
                                         std::size_t k_max) {
  heads.validate();
  if (!(score_thresh >= 0.0 && score_thresh <= 1.0))
    throw std::invalid_argument("decode: score_thresh must be in [0,1]");
  const Dim H = heads.heatmap.dim(1), W = heads.heatmap.dim(2);

  std::vector<Box2D> peaks;
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double s = heads.heatmap.at3(0, i, j);
      if (s < score_thresh) continue;
      bool is_max = true;
      for (Dim di = -1; di <= 1 && is_max; ++di) {
        for (Dim dj = -1; dj <= 1; ++dj) {
          const Dim y = i + di, x = j + dj;
          if (y < 0 || y >= H || x < 0 || x >= W) continue;
          if (heads.heatmap.at3(0, y, x) > s) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      Box2D b;
      b.cx = static_cast<double>(j) + heads.offset.at3(0, i, j);
      b.cy = static_cast<double>(i) + heads.offset.at3(1, i, j);
      b.w = heads.size.at3(0, i, j);
      b.h = heads.size.at3(1, i, j);
      b.score = s;
      peaks.push_back(b);
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Box2D& a, const Box2D& b) { return a.score > b.score; });
  if (peaks.size() > k_max) peaks.resize(k_max);
  return peaks;
}

std::vector<Box2D> nms_2d(std::vector<Box2D> boxes, double iou_thresh) {
  if (!(iou_thresh >= 0.0 && iou_thresh <= 1.0))
    throw std::invalid_argument("nms: iou_thresh must be in [0,1]");
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box2D& a, const Box2D& b) { return a.score > b.score; });
  std::vector<Box2D> kept;
  for (const Box2D& b : boxes) {
    bool suppressed = false;
    for (const Box2D& k : kept) {
      if (box2d_iou(b, k) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

HeadOutputs heatmap_targets(const std::vector<Box2D>& gt, Dim height, Dim width) {
  HeadOutputs t{Tensor({1, height, width}), Tensor({2, height, width}),
                Tensor({2, height, width})};
  for (const Box2D& b : gt) {
    b.validate();
    const Dim cx = static_cast<Dim>(std::floor(b.cx));
    const Dim cy = static_cast<Dim>(std::floor(b.cy));
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("heatmap_targets: box center outside grid");
    const Dim radius = std::max<Dim>(1, static_cast<Dim>(std::floor(std::min(b.w, b.h) / 6.0)));
    const double sigma = (2.0 * static_cast<double>(radius) + 1.0) / 6.0;
    for (Dim di = -radius; di <= radius; ++di) {
      for (Dim dj = -radius; dj <= radius; ++dj) {
        const Dim y = cy + di, x = cx + dj;
        if (y < 0 || y >= height || x < 0 || x >= width) continue;
        const double g = std::exp(-(static_cast<double>(di * di + dj * dj)) /
                                  (2.0 * sigma * sigma));
        t.heatmap.at3(0, y, x) = std::max(t.heatmap.at3(0, y, x), g);
      }
    }
    t.heatmap.at3(0, cy, cx) = 1.0;
    t.size.at3(0, cy, cx) = b.w;
    t.size.at3(1, cy, cx) = b.h;
    t.offset.at3(0, cy, cx) = b.cx - static_cast<double>(cx);
    t.offset.at3(1, cy, cx) = b.cy - static_cast<double>(cy);
  }
  return t;
}

namespace {
constexpr double kHeatClamp = 1e-4;
constexpr double kFocalAlpha = 2.0;
constexpr double kFocalBeta = 4.0;

double clamp_heat(double y) { return std::clamp(y, kHeatClamp, 1.0 - kHeatClamp); }

std::size_t count_centers(const HeadOutputs& targets) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < targets.heatmap.numel(); ++i)
    if (targets.heatmap[i] == 1.0) ++n;
  return n;
}
}  // namespace

double detection_loss(const HeadOutputs& pred, const HeadOutputs& targets) {
  pred.validate();
  targets.validate();
  if (!pred.heatmap.same_shape(targets.heatmap))
    throw std::invalid_argument("detection_loss: shape mismatch");
  const Dim H = pred.heatmap.dim(1), W = pred.heatmap.dim(2);
  const double cells = static_cast<double>(H * W);
  const double n_ctr = static_cast<double>(std::max<std::size_t>(1, count_centers(targets)));

  double cls = 0.0, reg = 0.0;
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double y = targets.heatmap.at3(0, i, j);
      const double p = clamp_heat(pred.heatmap.at3(0, i, j));
      if (y == 1.0) {
        cls -= std::pow(1.0 - p, kFocalAlpha) * std::log(p);
        for (Dim c = 0; c < 2; ++c) {
          reg += std::fabs(pred.size.at3(c, i, j) - targets.size.at3(c, i, j));
          reg += std::fabs(pred.offset.at3(c, i, j) - targets.offset.at3(c, i, j));
        }
      } else {
        cls -= std::pow(1.0 - y, kFocalBeta) * std::pow(p, kFocalAlpha) * std::log(1.0 - p);
      }
    }
  }
  return cls / cells + reg / n_ctr;
}

HeadOutputs detection_loss_grad(const HeadOutputs& pred, const HeadOutputs& targets) {
  const Dim H = pred.heatmap.dim(1), W = pred.heatmap.dim(2);
  const double cells = static_cast<double>(H * W);
  const double n_ctr = static_cast<double>(std::max<std::size_t>(1, count_centers(targets)));

  HeadOutputs g{Tensor({1, H, W}), Tensor({2, H, W}), Tensor({2, H, W})};
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double y = targets.heatmap.at3(0, i, j);
      const double raw_p = pred.heatmap.at3(0, i, j);
      const double p = clamp_heat(raw_p);
      const bool interior = (raw_p > kHeatClamp && raw_p < 1.0 - kHeatClamp);
      double d = 0.0;
      if (interior) {
        if (y == 1.0) {
          d = kFocalAlpha * std::pow(1.0 - p, kFocalAlpha - 1.0) * std::log(p) -
              std::pow(1.0 - p, kFocalAlpha) / p;
        } else {
          d = std::pow(1.0 - y, kFocalBeta) *
              (std::pow(p, kFocalAlpha) / (1.0 - p) -
               kFocalAlpha * std::pow(p, kFocalAlpha - 1.0) * std::log(1.0 - p));
        }
      }
      g.heatmap.at3(0, i, j) = d / cells;
      if (y == 1.0) {
        for (Dim c = 0; c < 2; ++c) {
          const double ds = pred.size.at3(c, i, j) - targets.size.at3(c, i, j);
          const double doff = pred.offset.at3(c, i, j) - targets.offset.at3(c, i, j);
          g.size.at3(c, i, j) = (ds > 0 ? 1.0 : (ds < 0 ? -1.0 : 0.0)) / n_ctr;
          g.offset.at3(c, i, j) = (doff > 0 ? 1.0 : (doff < 0 ? -1.0 : 0.0)) / n_ctr;
        }
      }
    }
  }
  return g;
}

RegionPatch extract_region(const RangeImage& ri, const Box2D& box) {
  box.validate();
  const Dim H = ri.config.height, W = ri.config.width;
  const Dim x0 = std::max<Dim>(0, static_cast<Dim>(std::floor(box.cx - box.w / 2)));
  const Dim x1 = std::min<Dim>(W, static_cast<Dim>(std::ceil(box.cx + box.w / 2)));
  const Dim y0 = std::max<Dim>(0, static_cast<Dim>(std::floor(box.cy - box.h / 2)));
  const Dim y1 = std::min<Dim>(H, static_cast<Dim>(std::ceil(box.cy + box.h / 2)));
  if (x0 >= x1 || y0 >= y1)
    throw std::invalid_argument("extract_region: box does not intersect the range image");

  RegionPatch p;
  p.y0 = y0;
  p.x0 = x0;
  p.values = Tensor({y1 - y0, x1 - x0});
  p.intensity = Tensor({y1 - y0, x1 - x0});
  for (Dim i = y0; i < y1; ++i) {
    for (Dim j = x0; j < x1; ++j) {
      p.values.at2(i - y0, j - x0) = ri.range.at2(i, j);
      p.intensity.at2(i - y0, j - x0) = ri.intensity.at2(i, j);
    }
  }
  return p;
}

RestorePatch upsample_with_mask(const Tensor& patch) {
  if (patch.rank() != 2) throw std::invalid_argument("upsample_with_mask expects [h,w]");
  const Dim h = patch.dim(0), w = patch.dim(1);
  RestorePatch rp{Tensor({2 * h, 2 * w}), Tensor({2 * h, 2 * w})};
  for (Dim i = 0; i < h; ++i) {
    for (Dim j = 0; j < w; ++j) {
      rp.values.at2(2 * i, 2 * j) = patch.at2(i, j);
      rp.mask.at2(2 * i, 2 * j) = 1.0;
    }
  }
  return rp;
}

Tensor compose_restore_values(const RestorePatch& rp, const Tensor& fill) {
  if (!fill.same_shape(rp.values))
    throw std::invalid_argument("compose_restore: fill shape mismatch");
  Tensor out = rp.values;
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (rp.mask[i] == 0.0) out[i] = fill[i];
  return out;
}

Tensor compose_restore(const RestorePatch& rp, const ParametricMap& compensator) {
  const Tensor fill = compensator.apply(rp.values);
  return compose_restore_values(rp, fill);
}

double gradient_loss(const Tensor& gen, const Tensor& gt) {
  if (!gen.same_shape(gt)) throw std::invalid_argument("gradient_loss: shape mismatch");
  if (gen.rank() != 2 || gen.dim(0) < 2 || gen.dim(1) < 2)
    throw std::invalid_argument("gradient_loss: inputs must be at least 2x2");
  const Dim H = gen.dim(0), W = gen.dim(1);
  double loss = 0.0;
  for (Dim i = 0; i < H; ++i)
    for (Dim j = 0; j + 1 < W; ++j)
      loss += std::fabs((gt.at2(i, j + 1) - gt.at2(i, j)) -
                        (gen.at2(i, j + 1) - gen.at2(i, j)));
  for (Dim i = 0; i + 1 < H; ++i)
    for (Dim j = 0; j < W; ++j)
      loss += std::fabs((gt.at2(i + 1, j) - gt.at2(i, j)) -
                        (gen.at2(i + 1, j) - gen.at2(i, j)));
  return loss;
}

Tensor gradient_loss_grad(const Tensor& gen, const Tensor& gt) {
  const Dim H = gen.dim(0), W = gen.dim(1);
  Tensor g(gen.shape());
  auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j + 1 < W; ++j) {
      const double s = sgn((gen.at2(i, j + 1) - gen.at2(i, j)) -
                           (gt.at2(i, j + 1) - gt.at2(i, j)));
      g.at2(i, j + 1) += s;
      g.at2(i, j) -= s;
    }
  }
  for (Dim i = 0; i + 1 < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const double s = sgn((gen.at2(i + 1, j) - gen.at2(i, j)) -
                           (gt.at2(i + 1, j) - gt.at2(i, j)));
      g.at2(i + 1, j) += s;
      g.at2(i, j) -= s;
    }
  }
  return g;
}

namespace {
// range patches are [h,w]; conv feature maps take [1,h,w]
Tensor as_single_channel(const Tensor& t) {
  if (t.rank() != 2) return t;
  return Tensor({1, t.dim(0), t.dim(1)},
                std::vector<double>(t.data(), t.data() + t.numel()));
}
}  // namespace

double restoration_loss(const Tensor& gen, const Tensor& gt, const ParametricMap& feat_fn) {
  if (!gen.same_shape(gt)) throw std::invalid_argument("restoration_loss: shape mismatch");
  double loss = gradient_loss(gen, gt);
  double l1 = 0.0;
  for (std::size_t i = 0; i < gen.numel(); ++i) l1 += std::fabs(gen[i] - gt[i]);
  loss += l1 / static_cast<double>(gen.numel());
  const Tensor fg = feat_fn.apply(as_single_channel(gen));
  const Tensor ft = feat_fn.apply(as_single_channel(gt));
  for (std::size_t i = 0; i < fg.numel(); ++i) loss += std::fabs(fg[i] - ft[i]);
  return loss;
}

Tensor restoration_loss_grad(const Tensor& gen, const Tensor& gt, const ParametricMap& feat_fn) {
  Tensor g = gradient_loss_grad(gen, gt);
  const double inv_n = 1.0 / static_cast<double>(gen.numel());
  for (std::size_t i = 0; i < gen.numel(); ++i) {
    const double d = gen[i] - gt[i];
    g[i] += (d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0));
  }
  const Tensor gen_in = as_single_channel(gen);
  const Tensor fg = feat_fn.apply(gen_in);
  const Tensor ft = feat_fn.apply(as_single_channel(gt));
  Tensor fgrad(fg.shape());
  for (std::size_t i = 0; i < fg.numel(); ++i) {
    const double d = fg[i] - ft[i];
    fgrad[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  const Tensor* in = &gen_in;
  const Tensor fin_grad = feat_fn.input_grad(std::span<const Tensor>(in, 1), fgrad, 0);
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] += fin_grad[i];
  return g;
}

std::shared_ptr<ParametricMap> default_perceptual_map() {
  // [1,h,w] -> [4,h,w], weights fixed by seed; acts as a frozen feature
  // extractor for the perceptual term.
  auto map = std::make_shared<ConvStackMap>(std::vector<Dim>{1, 8, 4});
  seed_params(*map, 0x9E1DFEEDull, 0.25);
  return map;
}

CompensatorFn compensator_from_map(std::shared_ptr<ParametricMap> map) {
  return [map](const Tensor& upsampled, Dim, Dim) {
    // conv maps take [C,H,W]; wrap the single-channel patch
    if (map->kind() == "conv_stack" || map->kind() == "cbr_stack") {
      Tensor in({1, upsampled.dim(0), upsampled.dim(1)});
      std::copy(upsampled.data(), upsampled.data() + upsampled.numel(), in.data());
      Tensor out = map->apply(in);
      if (out.dim(0) != 1) throw std::invalid_argument("compensator must emit one channel");
      return Tensor({upsampled.dim(0), upsampled.dim(1)},
                    std::vector<double>(out.data(), out.data() + out.numel()));
    }
    return map->apply(upsampled);
  };
}

PointCloud restore_pointcloud(const PointCloud& points, const ProjectionConfig& cfg,
                              std::vector<Box2D> boxes, const CompensatorFn& compensator,
                              double r_max) {
  cfg.validate();
  const RangeImage ri = project(points, cfg);

  // Originals keep the 1x pixel-center geometry.
  PointCloud out = unproject(ri);

  if (boxes.empty()) return out;
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box2D& a, const Box2D& b) { return a.score > b.score; });

  ProjectionConfig cfg2 = cfg;
  cfg2.height = 2 * cfg.height;
  cfg2.width = 2 * cfg.width;

  // Cells already written by a higher-scoring box are skipped.
  std::vector<std::uint8_t> claimed(static_cast<std::size_t>(cfg2.height * cfg2.width), 0);

  for (const Box2D& box : boxes) {
    const RegionPatch region = extract_region(ri, box);
    const RestorePatch rp = upsample_with_mask(region.values);
    const Tensor fill = compensator(rp.values, region.y0, region.x0);
    const Tensor restored = compose_restore_values(rp, fill);

    // Fills inherit intensity from region returns on the same surface (range
    // within a small band); returns at unrelated depths, e.g. near-sensor
    // weather scatter, do not contribute.
    std::vector<std::pair<double, double>> returns;  // (range, intensity)
    double int_sum = 0.0;
    for (std::size_t i = 0; i < region.values.numel(); ++i) {
      if (region.values[i] > 0.0) {
        returns.emplace_back(region.values[i], region.intensity[i]);
        int_sum += region.intensity[i];
      }
    }
    const double region_mean =
        returns.empty() ? 0.0 : int_sum / static_cast<double>(returns.size());
    auto surface_intensity = [&](double range) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& [rr, ii] : returns) {
        if (std::fabs(rr - range) <= 3.0) {
          sum += ii;
          ++n;
        }
      }
      return n ? sum / static_cast<double>(n) : region_mean;
    };

    const Dim ph = restored.dim(0), pw = restored.dim(1);
    for (Dim pi = 0; pi < ph; ++pi) {
      for (Dim pj = 0; pj < pw; ++pj) {
        if (rp.mask.at2(pi, pj) == 1.0) continue;  // original geometry, already emitted
        const Dim cy = 2 * region.y0 + pi;
        const Dim cx = 2 * region.x0 + pj;
        const std::size_t idx = static_cast<std::size_t>(cy * cfg2.width + cx);
        if (claimed[idx]) continue;
        claimed[idx] = 1;
        const double r = restored.at2(pi, pj);
        if (!(r > 0.0) || r > r_max) continue;  // physically implausible fill
        out.points.push_back(point_at_pixel_center(cfg2, cy, cx, r, surface_intensity(r)));
      }
    }
  }
  return out;
}

}  // namespace awf
