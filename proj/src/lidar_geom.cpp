#include "awf/lidar_geom.hpp"

#include <algorithm>
#include <cmath>

namespace awf {

namespace {
constexpr double kPi = 3.14159265358979323846;

double range_of(double x, double y, double z) {
  // Extended precision keeps the rounding to a single step, which lets
  // point_at_pixel_center make the inverse construction exact.
  const long double xl = x, yl = y, zl = z;
  return static_cast<double>(sqrtl(xl * xl + yl * yl + zl * zl));
}
}  // namespace

void ProjectionConfig::validate() const {
  if (height < 1 || width < 1)
    throw std::invalid_argument("projection: grid dims must be >= 1");
  if (!(theta_min < theta_max))
    throw std::invalid_argument("projection: theta_min must be < theta_max");
}

std::size_t RangeImage::count_valid() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

RangeImage project(const PointCloud& cloud, const ProjectionConfig& cfg) {
  cfg.validate();
  const Dim H = cfg.height, W = cfg.width;
  RangeImage ri{cfg, Tensor({H, W}), Tensor({H, W}),
                std::vector<std::uint8_t>(static_cast<std::size_t>(H * W), 0)};

  const double span = cfg.theta_max - cfg.theta_min;
  for (const LidarPoint& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("project: non-finite point coordinate");
    const double r = range_of(p.x, p.y, p.z);
    if (r <= 0.0) continue;  // direction undefined at the origin
    const double phi = std::atan2(p.y, p.x);
    const double theta = std::asin(std::clamp(p.z / r, -1.0, 1.0));
    if (theta < cfg.theta_min || theta > cfg.theta_max) continue;

    Dim u = static_cast<Dim>(std::floor((1.0 - phi / kPi) * static_cast<double>(W) * 0.5));
    if (u >= W) u -= W;  // phi == -pi wraps onto column 0
    if (u < 0) u = 0;
    Dim v = static_cast<Dim>(std::floor((1.0 - (theta - cfg.theta_min) / span) *
                                        static_cast<double>(H)));
    v = std::clamp<Dim>(v, 0, H - 1);

    const std::size_t idx = static_cast<std::size_t>(v * W + u);
    if (!ri.valid[idx] || r < ri.range[idx]) {  // nearest-surface rule; first wins on ties
      ri.valid[idx] = 1;
      ri.range[idx] = r;
      ri.intensity[idx] = p.intensity;
    }
  }
  return ri;
}

double azimuth_center(const ProjectionConfig& cfg, Dim u) {
  return kPi * (1.0 - (2.0 * static_cast<double>(u) + 1.0) / static_cast<double>(cfg.width));
}

double elevation_center(const ProjectionConfig& cfg, Dim v) {
  const double span = cfg.theta_max - cfg.theta_min;
  return cfg.theta_min +
         span * (1.0 - (static_cast<double>(v) + 0.5) / static_cast<double>(cfg.height));
}

namespace {

}  // namespace

LidarPoint point_at_pixel_center(const ProjectionConfig& cfg, Dim v, Dim u, double r,
                                 double intensity) {
  const double phi = azimuth_center(cfg, u);
  const double theta = elevation_center(cfg, v);
  const double ct = std::cos(theta);
  LidarPoint p{r * ct * std::cos(phi), r * ct * std::sin(phi), r * std::sin(theta), intensity};

  if (range_of(p.x, p.y, p.z) == r) return p;

  // Coordinate rounding leaves the recomputed norm a couple of ulps off the
  // stored range. Solve one component in extended precision and walk it by
  // ulps until project()'s own range computation reproduces r bit-exactly.
  // Components are tried from middle magnitude (finest control) outward.
  double* comps[3] = {&p.x, &p.y, &p.z};
  std::sort(comps, comps + 3,
            [](const double* a, const double* b) { return std::fabs(*a) < std::fabs(*b); });
  double* order[3] = {comps[1], comps[2], comps[0]};
  for (double* c : order) {
    if (*c == 0.0) continue;
    long double rest = 0.0L;
    for (double* o : comps)
      if (o != c) rest += static_cast<long double>(*o) * static_cast<long double>(*o);
    const long double want = static_cast<long double>(r) * static_cast<long double>(r) - rest;
    if (want <= 0.0L) continue;
    const double saved = *c;
    const double base = static_cast<double>(copysignl(sqrtl(want), saved));
    for (int k = 0; k <= 48; ++k) {
      for (int sgn = 0; sgn < (k == 0 ? 1 : 2); ++sgn) {
        double cand = base;
        for (int s = 0; s < k; ++s)
          cand = std::nextafter(cand, sgn == 0 ? HUGE_VAL : -HUGE_VAL);
        *c = cand;
        if (range_of(p.x, p.y, p.z) == r) return p;
      }
    }
    *c = saved;
  }
  // Unreachable in practice; keep the trig construction.
  return p;
}

PointCloud unproject(const RangeImage& ri) {
  ri.config.validate();
  PointCloud out;
  out.points.reserve(ri.count_valid());
  const Dim H = ri.config.height, W = ri.config.width;
  for (Dim v = 0; v < H; ++v) {
    for (Dim u = 0; u < W; ++u) {
      const std::size_t idx = static_cast<std::size_t>(v * W + u);
      if (!ri.valid[idx]) continue;
      out.points.push_back(point_at_pixel_center(ri.config, v, u, ri.range[idx],
                                                 ri.intensity[idx]));
    }
  }
  return out;
}

void BevExtent::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max))
    throw std::invalid_argument("bev: degenerate extent");
}

void VoxelSize::validate() const {
  if (dx <= 0.0 || dy <= 0.0 || dz <= 0.0)
    throw std::invalid_argument("bev: voxel dims must be positive");
}

Dim bev_rows(const BevExtent& e, const VoxelSize& v) {
  return static_cast<Dim>(std::ceil((e.x_max - e.x_min) / v.dx));
}

Dim bev_cols(const BevExtent& e, const VoxelSize& v) {
  return static_cast<Dim>(std::ceil((e.y_max - e.y_min) / v.dy));
}

BevGrid voxelize_bev(const PointCloud& cloud, const BevExtent& extent, const VoxelSize& voxel) {
  extent.validate();
  voxel.validate();
  const Dim HB = bev_rows(extent, voxel);
  const Dim WB = bev_cols(extent, voxel);
  BevGrid grid{extent, voxel, Tensor({3, HB, WB})};

  // Gather per-cell values first so accumulation order is canonical.
  struct CellEntry {
    double intensity;
    double z;
  };
  std::vector<std::vector<CellEntry>> cells(static_cast<std::size_t>(HB * WB));
  for (const LidarPoint& p : cloud.points) {
    if (p.x < extent.x_min || p.x >= extent.x_max || p.y < extent.y_min || p.y >= extent.y_max ||
        p.z < extent.z_min || p.z >= extent.z_max)
      continue;
    const Dim i = static_cast<Dim>(std::floor((p.x - extent.x_min) / voxel.dx));
    const Dim j = static_cast<Dim>(std::floor((p.y - extent.y_min) / voxel.dy));
    if (i < 0 || i >= HB || j < 0 || j >= WB) continue;
    cells[static_cast<std::size_t>(i * WB + j)].push_back({p.intensity, p.z});
  }

  double max_count = 0.0;
  for (const auto& c : cells) max_count = std::max(max_count, static_cast<double>(c.size()));

  const double z_span = extent.z_max - extent.z_min;
  for (Dim i = 0; i < HB; ++i) {
    for (Dim j = 0; j < WB; ++j) {
      auto& c = cells[static_cast<std::size_t>(i * WB + j)];
      if (c.empty()) continue;
      std::sort(c.begin(), c.end(), [](const CellEntry& a, const CellEntry& b) {
        return a.intensity < b.intensity || (a.intensity == b.intensity && a.z < b.z);
      });
      double int_sum = 0.0, z_max = c.front().z;
      for (const CellEntry& e : c) {
        int_sum += e.intensity;
        z_max = std::max(z_max, e.z);
      }
      grid.feature.at3(0, i, j) = static_cast<double>(c.size()) / max_count;
      grid.feature.at3(1, i, j) = int_sum / static_cast<double>(c.size());
      grid.feature.at3(2, i, j) = (z_max - extent.z_min) / z_span;
    }
  }
  return grid;
}

}  // namespace awf
