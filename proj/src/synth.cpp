#include "awf/synth.hpp"

#include <algorithm>
#include <cmath>

#include "awf/rng.hpp"

namespace awf {

Tensor render_ortho_image(const PointCloud& cloud, const SceneConfig& cfg) {
  const BevExtent& e = cfg.extent;
  const Dim H = cfg.image_h, W = cfg.image_w;
  const double sx = (e.x_max - e.x_min) / static_cast<double>(H);
  const double sy = (e.y_max - e.y_min) / static_cast<double>(W);

  std::vector<int> count(static_cast<std::size_t>(H * W), 0);
  std::vector<double> int_sum(static_cast<std::size_t>(H * W), 0.0);
  std::vector<double> z_max(static_cast<std::size_t>(H * W), -HUGE_VAL);
  for (const LidarPoint& p : cloud.points) {
    if (p.x < e.x_min || p.x >= e.x_max || p.y < e.y_min || p.y >= e.y_max || p.z < e.z_min ||
        p.z >= e.z_max)
      continue;
    const Dim i = static_cast<Dim>(std::floor((p.x - e.x_min) / sx));
    const Dim j = static_cast<Dim>(std::floor((p.y - e.y_min) / sy));
    if (i < 0 || i >= H || j < 0 || j >= W) continue;
    const std::size_t idx = static_cast<std::size_t>(i * W + j);
    count[idx] += 1;
    int_sum[idx] += p.intensity;
    z_max[idx] = std::max(z_max[idx], p.z);
  }

  int max_count = 0;
  for (int c : count) max_count = std::max(max_count, c);

  Tensor img({3, H, W});
  const double z_span = e.z_max - e.z_min;
  for (Dim i = 0; i < H; ++i) {
    for (Dim j = 0; j < W; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i * W + j);
      if (count[idx] == 0) continue;
      img.at3(0, i, j) = static_cast<double>(count[idx]) / static_cast<double>(max_count);
      img.at3(1, i, j) = int_sum[idx] / static_cast<double>(count[idx]);
      img.at3(2, i, j) = std::clamp((z_max[idx] - e.z_min) / z_span, 0.0, 1.0);
    }
  }
  return img;
}

namespace {

// Uniform sample on the five exposed faces of an axis-aligned box, picked by
// area, then rotated by yaw and translated to the pose.
LidarPoint sample_car_point(Rng& rng, const Box3D& box) {
  const double l = box.l, w = box.w, h = box.h;
  const double a_top = l * w;
  const double a_front = w * h;  // two of these
  const double a_side = l * h;   // two of these
  const double total = a_top + 2.0 * a_front + 2.0 * a_side;
  double pick = rng.uniform(0.0, total);

  double lx, ly, lz;
  if (pick < a_top) {
    lx = rng.uniform(-l / 2, l / 2);
    ly = rng.uniform(-w / 2, w / 2);
    lz = h / 2;
  } else if ((pick -= a_top) < 2.0 * a_front) {
    lx = (pick < a_front) ? l / 2 : -l / 2;
    ly = rng.uniform(-w / 2, w / 2);
    lz = rng.uniform(-h / 2, h / 2);
  } else {
    pick -= 2.0 * a_front;
    lx = rng.uniform(-l / 2, l / 2);
    ly = (pick < a_side) ? w / 2 : -w / 2;
    lz = rng.uniform(-h / 2, h / 2);
  }
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {box.x + lx * c - ly * s, box.y + lx * s + ly * c, box.z + lz, 0.6};
}

}  // namespace

Frame synth_scene(std::uint64_t seed, int n_objects, const SceneConfig& cfg) {
  if (n_objects < 0) throw std::invalid_argument("synth_scene: n_objects must be >= 0");
  cfg.extent.validate();
  cfg.projection.validate();
  Rng rng(seed);
  Frame frame;
  frame.calib = Calib::identity();

  // ground plane grid; kept a little inside the extent so the FOV behaves
  const double x0 = std::max(cfg.extent.x_min, 4.0);
  const double x1 = cfg.extent.x_max - 1.0;
  const double y0 = cfg.extent.y_min + 1.0;
  const double y1 = cfg.extent.y_max - 1.0;
  for (double x = x0; x < x1; x += cfg.ground_step)
    for (double y = y0; y < y1; y += cfg.ground_step)
      frame.points.points.push_back({x, y, cfg.ground_z, 0.3});

  // seeded car poses with separation; near-axis yaws match the desk anchors
  for (int k = 0; k < n_objects; ++k) {
    Box3D box;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      box.l = 3.9 * rng.uniform(0.9, 1.1);
      box.w = 1.6 * rng.uniform(0.9, 1.1);
      box.h = 1.56 * rng.uniform(0.9, 1.1);
      box.x = rng.uniform(x0 + 6.0, x1 - 6.0);
      box.y = rng.uniform(y0 + 4.0, y1 - 4.0);
      box.z = cfg.ground_z + box.h / 2.0;
      const double base_yaw = (rng.next_double() < 0.5) ? 0.0 : 1.57;
      box.yaw = wrap_angle(base_yaw + rng.uniform(-0.15, 0.15));
      box.score = 1.0;
      box.difficulty = Difficulty::Moderate;
      placed = true;
      for (const Box3D& other : frame.gt3d) {
        const double dx = other.x - box.x, dy = other.y - box.y;
        if (std::sqrt(dx * dx + dy * dy) < cfg.min_separation) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;  // crowded extent; keep the frame with fewer objects
    frame.gt3d.push_back(box);
    for (Dim p = 0; p < cfg.points_per_object; ++p)
      frame.points.points.push_back(sample_car_point(rng, box));
  }

  frame.image = render_ortho_image(frame.points, cfg);

  // image-space footprints of the ground truth
  const double sx = (cfg.extent.x_max - cfg.extent.x_min) / static_cast<double>(cfg.image_h);
  const double sy = (cfg.extent.y_max - cfg.extent.y_min) / static_cast<double>(cfg.image_w);
  for (const Box3D& b : frame.gt3d) {
    const auto corners = box_corners_bev(b);
    double xmin = HUGE_VAL, xmax = -HUGE_VAL, ymin = HUGE_VAL, ymax = -HUGE_VAL;
    for (const auto& c : corners) {
      xmin = std::min(xmin, c[0]);
      xmax = std::max(xmax, c[0]);
      ymin = std::min(ymin, c[1]);
      ymax = std::max(ymax, c[1]);
    }
    Box2D bb;
    bb.cy = ((xmin + xmax) / 2.0 - cfg.extent.x_min) / sx;  // rows bin x
    bb.cx = ((ymin + ymax) / 2.0 - cfg.extent.y_min) / sy;  // cols bin y
    bb.h = (xmax - xmin) / sx;
    bb.w = (ymax - ymin) / sy;
    bb.score = 1.0;
    frame.gt2d.push_back(bb);
  }
  return frame;
}

}  // namespace awf
