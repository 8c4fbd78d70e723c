#pragma once

#include <array>
#include <optional>
#include <string>

#include "awf/lidar_geom.hpp"
#include "awf/rng.hpp"
#include "awf/tensor.hpp"

namespace awf {

enum class WeatherKind { Rain, Fog, Sunlight };

std::string weather_kind_name(WeatherKind k);
WeatherKind weather_kind_from_name(const std::string& name);

/// Severity 0 means clean; 1..5 grade light to severe.
struct WeatherSpec {
  WeatherKind kind = WeatherKind::Fog;
  int severity = 0;
  void validate() const;
};

/// Per-severity model constants (index = severity 0..5). These are artifact
/// calibration tables, chosen so severity 5 visibly degrades a desk scene
/// while severity 1 stays mild.
struct WeatherTables {
  // points, fog: survival prob exp(-beta * r); dropped points scatter with
  // prob p_scatter to a near return at Uniform(1, min(r,10)) m, intensity 0.1
  static constexpr std::array<double, 6> fog_beta = {0.0, 0.02, 0.04, 0.07, 0.11, 0.16};
  static constexpr std::array<double, 6> fog_scatter_prob = {0.0, 0.05, 0.10, 0.15, 0.20, 0.25};
  // points, rain: dropout prob + Gaussian range jitter sigma (m)
  static constexpr std::array<double, 6> rain_drop = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  static constexpr std::array<double, 6> rain_jitter_sigma = {0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
  // points, sunlight: intensity saturation gain
  static constexpr std::array<double, 6> sun_intensity_gain = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  // image, fog shares fog_beta; airlight and default depth proxy:
  static constexpr double fog_airlight = 0.9;
  static constexpr double fog_default_depth = 20.0;
  // image, rain streak count / brightness
  static constexpr std::array<int, 6> rain_streaks = {0, 15, 30, 45, 60, 75};
  static constexpr double rain_streak_add = 0.25;
  // image, sunlight gain/bias
  static constexpr std::array<double, 6> sun_gain = {1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
  static constexpr std::array<double, 6> sun_bias = {0.0, 0.05, 0.10, 0.15, 0.20, 0.25};
};

/// Corrupts a point cloud. Severity 0 returns the input bit-exactly without
/// consuming randomness. Output depends only on (input, spec, rng seed).
PointCloud corrupt_points(const PointCloud& points, const WeatherSpec& spec, Rng rng);

/// Corrupts an RGB image in [0,1]; the output stays in [0,1]. depth_proxy,
/// when given, must be [H,W] and drives the per-pixel fog transmittance;
/// otherwise a constant 20 m depth is assumed.
Tensor corrupt_image(const Tensor& img, const WeatherSpec& spec, Rng rng,
                     const std::optional<Tensor>& depth_proxy = std::nullopt);

}  // namespace awf
