#include "awf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace awf {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
    case Difficulty::Ignore: return "ignore";
  }
  return "?";
}

void Box3D::validate() const {
  if (!(l > 0.0) || !(w > 0.0) || !(h > 0.0))
    throw std::invalid_argument("box3d: dims must be positive");
  if (!(yaw > -kPi - 1e-9 && yaw <= kPi + 1e-9))
    throw std::invalid_argument("box3d: yaw must lie in (-pi, pi]");
}

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

std::vector<std::array<double, 2>> box_corners_bev(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.l / 2.0, hw = b.w / 2.0;
  // CCW order for positive yaw-free orientation
  const double dx[4] = {hl, -hl, -hl, hl};
  const double dy[4] = {hw, hw, -hw, -hw};
  std::vector<std::array<double, 2>> out(4);
  for (int k = 0; k < 4; ++k)
    out[static_cast<std::size_t>(k)] = {b.x + dx[k] * c - dy[k] * s,
                                        b.y + dx[k] * s + dy[k] * c};
  return out;
}

double convex_intersection_area(const std::vector<std::array<double, 2>>& a,
                                const std::vector<std::array<double, 2>>& b) {
  // Sutherland-Hodgman: clip polygon a against every edge of convex b (CCW).
  std::vector<std::array<double, 2>> poly = a;
  for (std::size_t e = 0; e < b.size() && !poly.empty(); ++e) {
    const auto& p0 = b[e];
    const auto& p1 = b[(e + 1) % b.size()];
    auto side = [&](const std::array<double, 2>& q) {
      return (p1[0] - p0[0]) * (q[1] - p0[1]) - (p1[1] - p0[1]) * (q[0] - p0[0]);
    };
    std::vector<std::array<double, 2>> next;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const auto& cur = poly[i];
      const auto& nxt = poly[(i + 1) % poly.size()];
      const double sc = side(cur), sn = side(nxt);
      if (sc >= 0.0) next.push_back(cur);
      if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
        const double t = sc / (sc - sn);
        next.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
      }
    }
    poly = std::move(next);
  }
  if (poly.size() < 3) return 0.0;
  double area2 = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    area2 += p[0] * q[1] - q[0] * p[1];
  }
  return std::fabs(area2) / 2.0;
}

double iou(const Box3D& a, const Box3D& b, IouMode mode) {
  a.validate();
  b.validate();
  switch (mode) {
    case IouMode::Axis2D: {
      const double ix = std::max(0.0, std::min(a.x + a.l / 2, b.x + b.l / 2) -
                                          std::max(a.x - a.l / 2, b.x - b.l / 2));
      const double iy = std::max(0.0, std::min(a.y + a.w / 2, b.y + b.w / 2) -
                                          std::max(a.y - a.w / 2, b.y - b.w / 2));
      const double inter = ix * iy;
      const double uni = a.l * a.w + b.l * b.w - inter;
      return uni > 0.0 ? inter / uni : 0.0;
    }
    case IouMode::BevRotated: {
      const double inter = convex_intersection_area(box_corners_bev(a), box_corners_bev(b));
      const double uni = a.l * a.w + b.l * b.w - inter;
      return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
    }
    case IouMode::Full3D: {
      const double inter_bev = convex_intersection_area(box_corners_bev(a), box_corners_bev(b));
      const double zi = std::max(0.0, std::min(a.z + a.h / 2, b.z + b.h / 2) -
                                          std::max(a.z - a.h / 2, b.z - b.h / 2));
      const double inter = inter_bev * zi;
      const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
      return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
    }
  }
  return 0.0;
}

namespace {

struct ScoredFlag {
  double score;
  bool tp;
};

// Greedy per-frame assignment; appends (score, tp) for counted detections and
// returns the number of counted GTs. Detections matching only dont-care GTs
// are skipped entirely.
std::size_t assign_frame(const FrameBoxes& fb, double iou_thresh, IouMode mode,
                         Difficulty level, std::vector<ScoredFlag>* out) {
  std::vector<std::size_t> order(fb.dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fb.dets[a].score > fb.dets[b].score;
  });

  std::vector<bool> counted(fb.gts.size());
  std::size_t n_counted = 0;
  for (std::size_t g = 0; g < fb.gts.size(); ++g) {
    counted[g] =
        fb.gts[g].difficulty != Difficulty::Ignore &&
        static_cast<int>(fb.gts[g].difficulty) <= static_cast<int>(level);
    n_counted += counted[g];
  }

  std::vector<bool> matched(fb.gts.size(), false);
  for (std::size_t oi : order) {
    const Box3D& det = fb.dets[oi];
    double best = 0.0, best_ign = 0.0;
    std::size_t best_g = fb.gts.size();
    for (std::size_t g = 0; g < fb.gts.size(); ++g) {
      const double v = iou(det, fb.gts[g], mode);
      if (v < iou_thresh) continue;
      if (counted[g]) {
        if (!matched[g] && v > best) {
          best = v;
          best_g = g;
        }
      } else {
        best_ign = std::max(best_ign, v);
      }
    }
    if (best_g < fb.gts.size()) {
      matched[best_g] = true;
      out->push_back({det.score, true});
    } else if (best_ign >= iou_thresh) {
      // dont-care region: neither TP nor FP
    } else {
      out->push_back({det.score, false});
    }
  }
  return n_counted;
}

double ap_from_flags(std::vector<ScoredFlag> flags, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::stable_sort(flags.begin(), flags.end(),
                   [](const ScoredFlag& a, const ScoredFlag& b) { return a.score > b.score; });
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    tp += flags[k].tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  double ap = 0.0;
  for (int r = 1; r <= 40; ++r) {
    const double target = static_cast<double>(r) / 40.0;
    double best = 0.0;
    for (std::size_t k = 0; k < precision.size(); ++k)
      if (recall[k] >= target) best = std::max(best, precision[k]);
    ap += best;
  }
  return ap / 40.0;
}

}  // namespace

double ap_r40(const std::vector<Box3D>& dets, const std::vector<Box3D>& gts, double iou_thresh,
              IouMode mode, Difficulty eval_difficulty) {
  return ap_r40_frames({FrameBoxes{dets, gts}}, iou_thresh, mode, eval_difficulty);
}

double ap_r40_frames(const std::vector<FrameBoxes>& frames, double iou_thresh, IouMode mode,
                     Difficulty eval_difficulty) {
  std::vector<ScoredFlag> flags;
  std::size_t n_gt = 0;
  for (const FrameBoxes& fb : frames)
    n_gt += assign_frame(fb, iou_thresh, mode, eval_difficulty, &flags);
  return ap_from_flags(std::move(flags), n_gt);
}

double aggregate_severities(const std::vector<double>& per_severity_ap) {
  if (per_severity_ap.size() != 5)
    throw std::invalid_argument("aggregate expects exactly 5 severity APs");
  double sum = 0.0;
  for (double a : per_severity_ap) sum += a;
  return sum / 5.0;
}

std::vector<Box3D> nms_bev(std::vector<Box3D> boxes, double iou_thresh) {
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box3D& a, const Box3D& b) { return a.score > b.score; });
  std::vector<Box3D> kept;
  for (const Box3D& b : boxes) {
    bool suppressed = false;
    for (const Box3D& k : kept) {
      if (iou(b, k, IouMode::BevRotated) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

std::vector<Box3D> anchor_decode_3d(const Tensor& score_map, const Tensor& reg_map,
                                    const AnchorConfig& cfg) {
  const Dim A = static_cast<Dim>(cfg.rotations.size());
  if (score_map.rank() != 3 || score_map.dim(0) != A)
    throw std::invalid_argument("anchor_decode: score map must be [A,H,W]");
  if (reg_map.rank() != 3 || reg_map.dim(0) != A * 7 ||
      reg_map.dim(1) != score_map.dim(1) || reg_map.dim(2) != score_map.dim(2))
    throw std::invalid_argument("anchor_decode: reg map must be [A*7,H,W]");
  cfg.extent.validate();
  cfg.voxel.validate();

  const Dim H = score_map.dim(1), W = score_map.dim(2);
  const double la = cfg.size[0], wa = cfg.size[1], ha = cfg.size[2];
  const double diag = std::sqrt(la * la + wa * wa);

  std::vector<Box3D> boxes;
  for (Dim a = 0; a < A; ++a) {
    for (Dim i = 0; i < H; ++i) {
      for (Dim j = 0; j < W; ++j) {
        const double score = score_map.at3(a, i, j);
        if (score < cfg.score_thresh) continue;
        const double ax = cfg.extent.x_min + (static_cast<double>(i) + 0.5) * cfg.voxel.dx;
        const double ay = cfg.extent.y_min + (static_cast<double>(j) + 0.5) * cfg.voxel.dy;
        Box3D b;
        b.x = reg_map.at3(a * 7 + 0, i, j) * diag + ax;
        b.y = reg_map.at3(a * 7 + 1, i, j) * diag + ay;
        b.z = reg_map.at3(a * 7 + 2, i, j) * ha + cfg.anchor_z;
        b.l = std::exp(reg_map.at3(a * 7 + 3, i, j)) * la;
        b.w = std::exp(reg_map.at3(a * 7 + 4, i, j)) * wa;
        b.h = std::exp(reg_map.at3(a * 7 + 5, i, j)) * ha;
        b.yaw = wrap_angle(cfg.rotations[static_cast<std::size_t>(a)] +
                           reg_map.at3(a * 7 + 6, i, j));
        b.score = score;
        boxes.push_back(b);
      }
    }
  }
  return nms_bev(std::move(boxes), cfg.nms_iou);
}

}  // namespace awf
