#include "awf/ops.hpp"

#include <algorithm>
#include <cmath>

namespace awf {

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
  ensure_finite(x, "softmax input");

  const auto& shape = x.shape();
  std::size_t axis_len = static_cast<std::size_t>(shape[axis]);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= static_cast<std::size_t>(shape[a]);
  std::size_t outer = x.numel() / (axis_len * inner);

  Tensor out = x;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * axis_len * inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < axis_len; ++k) mx = std::max(mx, x[base + k * inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < axis_len; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < axis_len; ++k) out[base + k * inner] /= sum;
    }
  }
  return out;
}

Tensor adaptive_avg_pool(const Tensor& x, Dim out_h, Dim out_w) {
  if (x.rank() != 3) throw std::invalid_argument("adaptive_avg_pool expects [C,H,W]");
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("adaptive_avg_pool: zero output dims");
  const Dim C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (out_h > H || out_w > W)
    throw std::invalid_argument("adaptive_avg_pool: output larger than input");

  Tensor out({C, out_h, out_w});
  for (Dim c = 0; c < C; ++c) {
    for (Dim i = 0; i < out_h; ++i) {
      const Dim r0 = (i * H) / out_h;
      const Dim r1 = ((i + 1) * H + out_h - 1) / out_h;  // ceil
      for (Dim j = 0; j < out_w; ++j) {
        const Dim c0 = (j * W) / out_w;
        const Dim c1 = ((j + 1) * W + out_w - 1) / out_w;
        double sum = 0.0;
        for (Dim r = r0; r < r1; ++r)
          for (Dim q = c0; q < c1; ++q) sum += x.at3(c, r, q);
        out.at3(c, i, j) = sum / static_cast<double>((r1 - r0) * (c1 - c0));
      }
    }
  }
  return out;
}

namespace {

// Unnormalize an align-corners coordinate and snap near-integer results.
inline double to_pixel(double n, Dim size) {
  if (size == 1) return 0.0;
  double x = (n + 1.0) * 0.5 * static_cast<double>(size - 1);
  const double r = std::nearbyint(x);
  if (std::fabs(x - r) < 1e-9) x = r;
  return x;
}

inline double corner(const Tensor& feat, Dim c, Dim i, Dim j, Dim H, Dim W) {
  if (i < 0 || i >= H || j < 0 || j >= W) return 0.0;  // zero padding
  return feat.at3(c, i, j);
}

}  // namespace

Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& grid) {
  if (feat.rank() != 3) throw std::invalid_argument("grid_sample: feat must be [C,H,W]");
  if (grid.rank() != 3 || grid.dim(2) != 2)
    throw std::invalid_argument("grid_sample: grid must be [H',W',2]");
  const Dim C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  const Dim OH = grid.dim(0), OW = grid.dim(1);

  Tensor out({C, OH, OW});
  for (Dim gi = 0; gi < OH; ++gi) {
    for (Dim gj = 0; gj < OW; ++gj) {
      const double x = to_pixel(grid.at3(gi, gj, 0), W);
      const double y = to_pixel(grid.at3(gi, gj, 1), H);
      const Dim x0 = static_cast<Dim>(std::floor(x));
      const Dim y0 = static_cast<Dim>(std::floor(y));
      const double fx = x - static_cast<double>(x0);
      const double fy = y - static_cast<double>(y0);
      for (Dim c = 0; c < C; ++c) {
        const double v00 = corner(feat, c, y0, x0, H, W);
        const double v01 = corner(feat, c, y0, x0 + 1, H, W);
        const double v10 = corner(feat, c, y0 + 1, x0, H, W);
        const double v11 = corner(feat, c, y0 + 1, x0 + 1, H, W);
        out.at3(c, gi, gj) =
            (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
  }
  return out;
}

GridSampleGrad grid_sample_bilinear_grad(const Tensor& feat, const Tensor& grid,
                                         const Tensor& grad_out) {
  if (grad_out.rank() != 3 || grad_out.dim(0) != feat.dim(0) || grad_out.dim(1) != grid.dim(0) ||
      grad_out.dim(2) != grid.dim(1))
    throw std::invalid_argument("grid_sample_grad: grad_out shape mismatch");
  const Dim C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
  const Dim OH = grid.dim(0), OW = grid.dim(1);

  GridSampleGrad g{Tensor({C, H, W}), Tensor({OH, OW, 2})};
  const double sx = (W == 1) ? 0.0 : 0.5 * static_cast<double>(W - 1);
  const double sy = (H == 1) ? 0.0 : 0.5 * static_cast<double>(H - 1);

  for (Dim gi = 0; gi < OH; ++gi) {
    for (Dim gj = 0; gj < OW; ++gj) {
      const double x = to_pixel(grid.at3(gi, gj, 0), W);
      const double y = to_pixel(grid.at3(gi, gj, 1), H);
      const Dim x0 = static_cast<Dim>(std::floor(x));
      const Dim y0 = static_cast<Dim>(std::floor(y));
      const double fx = x - static_cast<double>(x0);
      const double fy = y - static_cast<double>(y0);
      double du = 0.0, dv = 0.0;
      for (Dim c = 0; c < C; ++c) {
        const double go = grad_out.at3(c, gi, gj);
        const double v00 = corner(feat, c, y0, x0, H, W);
        const double v01 = corner(feat, c, y0, x0 + 1, H, W);
        const double v10 = corner(feat, c, y0 + 1, x0, H, W);
        const double v11 = corner(feat, c, y0 + 1, x0 + 1, H, W);
        // d out / d pixel coords
        du += go * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
        dv += go * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
        // d out / d feat: scatter the four bilinear weights
        auto add = [&](Dim i, Dim j, double w) {
          if (i >= 0 && i < H && j >= 0 && j < W) g.feat_grad.at3(c, i, j) += go * w;
        };
        add(y0, x0, (1.0 - fy) * (1.0 - fx));
        add(y0, x0 + 1, (1.0 - fy) * fx);
        add(y0 + 1, x0, fy * (1.0 - fx));
        add(y0 + 1, x0 + 1, fy * fx);
      }
      g.grid_grad.at3(gi, gj, 0) = du * sx;
      g.grid_grad.at3(gi, gj, 1) = dv * sy;
    }
  }
  return g;
}

}  // namespace awf
