#pragma once

#include <string>

#include "awf/lidar_geom.hpp"
#include "awf/maps.hpp"
#include "awf/tensor.hpp"

namespace awf {

/// Self-describing binary tensor file:
///   magic "AWTF", version u16, ndim u16, dims u64 each,
///   payload little-endian float32 row-major.
/// load(save(t)) is the identity up to float32 rounding.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// Parameter vectors persist as 1-D AWTF tensors.
void save_params(const std::string& path, const ParametricMap& map);
void load_params(const std::string& path, ParametricMap& map);

/// Range image file:
///   magic "AWRI", version u16, H u32, W u32, theta_min f64, theta_max f64,
///   range f32[H*W], intensity f32[H*W], valid u8[H*W].
void save_range_image(const std::string& path, const RangeImage& ri);
RangeImage load_range_image(const std::string& path);

}  // namespace awf
