#pragma once

#include <string>

#include "awf/lidar_geom.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Writes a [3,H,W] image with values in [0,1] as 8-bit RGB PNG.
void write_png_rgb8(const std::string& path, const Tensor& img);

/// Writes a [H,W] tensor as 16-bit grayscale PNG; values are divided by
/// scale and clamped to [0,1] before quantization.
void write_png_gray16(const std::string& path, const Tensor& img, double scale);

/// Range image export: 16-bit grayscale scaled by r / 120 m.
void write_range_png(const std::string& path, const RangeImage& ri);

}  // namespace awf
