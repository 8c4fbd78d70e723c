#pragma once

#include <cstdint>
#include <vector>

#include "awf/tensor.hpp"

namespace awf {

struct LidarPoint {
  double x = 0.0, y = 0.0, z = 0.0;  // meters, sensor frame
  double intensity = 0.0;            // [0,1]
};

struct PointCloud {
  std::vector<LidarPoint> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Equidistant spherical projection grid. Rows cover the elevation range
/// [theta_min, theta_max], columns the full azimuth circle.
struct ProjectionConfig {
  Dim height = 64;
  Dim width = 512;
  double theta_min = -25.0 * 3.14159265358979323846 / 180.0;
  double theta_max = 3.0 * 3.14159265358979323846 / 180.0;

  void validate() const;
  bool operator==(const ProjectionConfig&) const = default;
};

/// Range image with an explicit validity mask. The mask is authoritative:
/// invalid pixels store range 0, valid pixels store range > 0.
struct RangeImage {
  ProjectionConfig config;
  Tensor range;                 // [H,W] meters
  Tensor intensity;             // [H,W]
  std::vector<std::uint8_t> valid;  // H*W, row-major

  bool valid_at(Dim v, Dim u) const {
    return valid[static_cast<std::size_t>(v * config.width + u)] != 0;
  }
  std::size_t count_valid() const;
};

/// Projects a cloud onto the range grid. Per point: r = |p|,
/// phi = atan2(y,x), theta = asin(z/r); u = floor((1 - phi/pi) * W/2) wrapped
/// into [0,W), v = floor((1 - (theta-theta_min)/(theta_max-theta_min)) * H)
/// clamped. Points with theta outside the bounds (or at the exact origin) are
/// dropped; pixel collisions keep the smallest range (nearest surface).
RangeImage project(const PointCloud& cloud, const ProjectionConfig& cfg);

/// Inverse of project: each valid pixel becomes a point at the pixel-center
/// angles carrying the stored range and intensity. Coordinates are constructed
/// so that project() recovers the same pixel and recomputes the stored range
/// bit-exactly.
PointCloud unproject(const RangeImage& ri);

/// Pixel-center angles for a given cell.
double azimuth_center(const ProjectionConfig& cfg, Dim u);
double elevation_center(const ProjectionConfig& cfg, Dim v);

/// Builds one point at the pixel-center direction whose double-precision
/// norm equals r bit-exactly (shared by unproject and patch paste-back).
LidarPoint point_at_pixel_center(const ProjectionConfig& cfg, Dim v, Dim u, double r,
                                 double intensity);

struct BevExtent {
  double x_min = 0.0, x_max = 51.2;
  double y_min = -25.6, y_max = 25.6;
  double z_min = -3.0, z_max = 1.0;
  void validate() const;
};

struct VoxelSize {
  double dx = 0.05, dy = 0.05, dz = 0.1;
  void validate() const;
};

/// BEV occupancy/feature grid: rows bin x, columns bin y, z collapsed.
/// Channels: [0] occupancy count normalized by the max cell count,
/// [1] mean intensity, [2] max point height normalized by the z extent.
struct BevGrid {
  BevExtent extent;
  VoxelSize voxel;
  Tensor feature;  // [3, H_B, W_B]

  Dim height() const { return feature.dim(1); }
  Dim width() const { return feature.dim(2); }
};

Dim bev_rows(const BevExtent& e, const VoxelSize& v);
Dim bev_cols(const BevExtent& e, const VoxelSize& v);

/// Out-of-extent points are ignored (extent is half-open on the upper edge).
/// Per-cell accumulation happens in a canonical sorted order, so the result
/// is bit-identical under any permutation of the input points.
BevGrid voxelize_bev(const PointCloud& cloud, const BevExtent& extent, const VoxelSize& voxel);

}  // namespace awf
