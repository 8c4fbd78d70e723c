#pragma once

#include <vector>

#include "awf/eval.hpp"
#include "awf/kitti_io.hpp"
#include "awf/lidar_geom.hpp"
#include "awf/point_restore.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Desk-scale scene layout shared by the generator and the pipeline: the
/// orthographic camera footprint equals the BEV extent so the modalities are
/// pixel-aligned by construction.
struct SceneConfig {
  BevExtent extent;
  VoxelSize voxel{0.8, 0.8, 4.0};
  ProjectionConfig projection;
  Dim image_h = 64, image_w = 64;
  double ground_z = -1.6;
  double ground_step = 0.5;
  Dim points_per_object = 160;
  double min_separation = 7.0;  // object center spacing, meters
};

struct Frame {
  int id = 0;
  PointCloud points;
  Tensor image;  // [3, image_h, image_w]
  Calib calib;
  std::vector<Box3D> gt3d;
  std::vector<Box2D> gt2d;  // footprints on the image
};

/// Orthographic top-down intensity render over the scene extent. Channels
/// mirror the BEV voxelizer: occupancy normalized by the max cell count,
/// mean intensity, max height normalized by the z extent.
Tensor render_ortho_image(const PointCloud& cloud, const SceneConfig& cfg);

/// Deterministic synthetic frame: a ground-plane grid plus box-shaped car
/// surface clusters near anchor dimensions at seeded poses; ground truth is
/// exact by construction and tagged Moderate.
Frame synth_scene(std::uint64_t seed, int n_objects, const SceneConfig& cfg);

}  // namespace awf
