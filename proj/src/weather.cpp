#include "awf/weather.hpp"

#include <algorithm>
#include <cmath>

namespace awf {

std::string weather_kind_name(WeatherKind k) {
  switch (k) {
    case WeatherKind::Rain: return "rain";
    case WeatherKind::Fog: return "fog";
    case WeatherKind::Sunlight: return "sunlight";
  }
  return "?";
}

WeatherKind weather_kind_from_name(const std::string& name) {
  if (name == "rain") return WeatherKind::Rain;
  if (name == "fog") return WeatherKind::Fog;
  if (name == "sunlight") return WeatherKind::Sunlight;
  throw std::invalid_argument("unknown weather kind '" + name + "'");
}

void WeatherSpec::validate() const {
  if (severity < 0 || severity > 5)
    throw std::invalid_argument("weather severity must be in [0,5]");
}

PointCloud corrupt_points(const PointCloud& points, const WeatherSpec& spec, Rng rng) {
  spec.validate();
  if (spec.severity == 0) return points;
  const int s = spec.severity;

  PointCloud out;
  out.points.reserve(points.size());
  switch (spec.kind) {
    case WeatherKind::Fog: {
      const double beta = WeatherTables::fog_beta[s];
      const double p_scat = WeatherTables::fog_scatter_prob[s];
      for (const LidarPoint& p : points.points) {
        const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        if (rng.next_double() < std::exp(-beta * r)) {
          out.points.push_back(p);
          continue;
        }
        if (rng.next_double() < p_scat) {
          // near-sensor particle return along the same ray
          const double hi = std::min(r, 10.0);
          const double lo = std::min(1.0, hi);
          const double rs = rng.uniform(lo, hi);
          const double scale = r > 0.0 ? rs / r : 0.0;
          out.points.push_back({p.x * scale, p.y * scale, p.z * scale, 0.1});
        }
      }
      break;
    }
    case WeatherKind::Rain: {
      const double q = WeatherTables::rain_drop[s];
      const double sigma = WeatherTables::rain_jitter_sigma[s];
      for (const LidarPoint& p : points.points) {
        if (rng.next_double() < q) continue;
        const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        const double jitter = sigma * rng.normal();
        const double r2 = std::max(1e-3, r + jitter);
        const double scale = r > 0.0 ? r2 / r : 0.0;
        out.points.push_back({p.x * scale, p.y * scale, p.z * scale, p.intensity});
      }
      break;
    }
    case WeatherKind::Sunlight: {
      const double gain = WeatherTables::sun_intensity_gain[s];
      for (const LidarPoint& p : points.points)
        out.points.push_back({p.x, p.y, p.z, std::min(1.0, p.intensity + gain)});
      break;
    }
  }
  return out;
}

Tensor corrupt_image(const Tensor& img, const WeatherSpec& spec, Rng rng,
                     const std::optional<Tensor>& depth_proxy) {
  spec.validate();
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("corrupt_image expects [3,H,W]");
  for (std::size_t i = 0; i < img.numel(); ++i)
    if (!(img[i] >= 0.0 && img[i] <= 1.0))
      throw std::invalid_argument("corrupt_image: pixel values must be in [0,1]");
  const Dim H = img.dim(1), W = img.dim(2);
  if (depth_proxy && (depth_proxy->rank() != 2 || depth_proxy->dim(0) != H ||
                      depth_proxy->dim(1) != W))
    throw std::invalid_argument("corrupt_image: depth proxy must be [H,W]");

  if (spec.severity == 0) return img;
  const int s = spec.severity;
  Tensor out = img;

  switch (spec.kind) {
    case WeatherKind::Fog: {
      const double beta = WeatherTables::fog_beta[s];
      const double A = WeatherTables::fog_airlight;
      for (Dim i = 0; i < H; ++i) {
        for (Dim j = 0; j < W; ++j) {
          const double d =
              depth_proxy ? depth_proxy->at2(i, j) : WeatherTables::fog_default_depth;
          const double t = std::exp(-beta * d);
          for (Dim c = 0; c < 3; ++c) {
            const double v = img.at3(c, i, j) * t + A * (1.0 - t);
            out.at3(c, i, j) = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      break;
    }
    case WeatherKind::Rain: {
      const int n = WeatherTables::rain_streaks[s];
      const double add = WeatherTables::rain_streak_add;
      for (int k = 0; k < n; ++k) {
        const double ci = rng.uniform(0.0, static_cast<double>(H));
        const double cj = rng.uniform(0.0, static_cast<double>(W));
        const double angle = rng.uniform(-0.2, 0.2);  // streaks near vertical
        const double len = std::max(2.0, static_cast<double>(H) / 4.0);
        const double di = std::cos(angle), dj = std::sin(angle);
        for (double t = -len / 2.0; t <= len / 2.0; t += 0.5) {
          const Dim i = static_cast<Dim>(std::lround(ci + t * di));
          const Dim j = static_cast<Dim>(std::lround(cj + t * dj));
          if (i < 0 || i >= H || j < 0 || j >= W) continue;
          for (Dim c = 0; c < 3; ++c)
            out.at3(c, i, j) = std::min(1.0, out.at3(c, i, j) + add);
        }
      }
      break;
    }
    case WeatherKind::Sunlight: {
      const double gain = WeatherTables::sun_gain[s];
      const double bias = WeatherTables::sun_bias[s];
      for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::clamp(gain * out[i] + bias, 0.0, 1.0);
      break;
    }
  }
  return out;
}

}  // namespace awf
