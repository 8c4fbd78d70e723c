#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "awf/eval.hpp"
#include "awf/lidar_geom.hpp"

namespace awf {

/// Calibration matrices in the public KITTI layout: camera projection P2
/// (3x4), rectification R0 (3x3), lidar-to-camera transform Tr (3x4).
struct Calib {
  std::array<double, 12> P2;
  std::array<double, 9> R0;
  std::array<double, 12> Tr;
  static Calib identity();
};

/// One object label line: 15 whitespace fields plus an optional score.
struct KittiLabel {
  std::string type;
  double truncated = 0.0;
  double occluded = 0.0;
  double alpha = 0.0;
  std::array<double, 4> bbox = {0, 0, 0, 0};  // left, top, right, bottom (px)
  double h = 0.0, w = 0.0, l = 0.0;           // camera-frame box sizes
  double x = 0.0, y = 0.0, z = 0.0;           // camera frame, bottom center
  double rotation_y = 0.0;
  std::optional<double> score;
  bool dont_care = false;
};

/// Little-endian float32 quadruples (x, y, z, intensity). File size must be a
/// multiple of 16 bytes.
PointCloud read_velodyne(const std::string& path);
void write_velodyne(const std::string& path, const PointCloud& cloud);

/// Parse errors carry the 1-based line number.
std::vector<KittiLabel> read_label(const std::string& path);

/// Missing keys default to identity; malformed values are format errors.
Calib read_calib(const std::string& path);

/// KITTI difficulty gates from 2D box height, occlusion and truncation:
///   easy:     >= 40 px, occlusion 0,  truncation <= 0.15
///   moderate: >= 25 px, occlusion <= 1, truncation <= 0.30
///   hard:     >= 25 px, occlusion <= 2, truncation <= 0.50
/// Anything else (and DontCare) is Ignore.
Difficulty label_difficulty(const KittiLabel& label);

/// Converts a camera-frame label to a sensor-frame Box3D through the calib
/// (bottom-center to center, inverse rectification + lidar transform, yaw
/// convention change).
Box3D box3d_from_label(const KittiLabel& label, const Calib& calib);

}  // namespace awf
