#pragma once

#include "awf/tensor.hpp"

namespace awf {

/// Numerically stable softmax (max-subtraction) along the given axis.
/// Slices along the axis sum to one for every finite input.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Adaptive average pooling over [C,H,W]. Output bin i along a dimension of
/// size N spans [floor(i*N/out), ceil((i+1)*N/out)), the standard adaptive
/// pooling partition; each output cell is the arithmetic mean of its bin.
Tensor adaptive_avg_pool(const Tensor& x, Dim out_h, Dim out_w);

/// Bilinear sampling of feat [C,H,W] at grid [H',W',2] positions.
///
/// Grid coordinates are normalized: the last dim holds (u,v) with u horizontal;
/// -1 maps to pixel center 0 and +1 to pixel center (W-1) (align-corners).
/// Samples outside the feature use zero padding per corner. Unnormalized
/// coordinates within 1e-9 of a pixel center snap to it, so identity grids
/// reproduce the input bit-exactly.
Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& grid);

struct GridSampleGrad {
  Tensor feat_grad;  // same shape as feat
  Tensor grid_grad;  // same shape as grid, in normalized units
};

/// Backward pass of grid_sample_bilinear for a given upstream gradient
/// [C,H',W']. Zero-padded corners contribute nothing to either gradient.
GridSampleGrad grid_sample_bilinear_grad(const Tensor& feat, const Tensor& grid,
                                         const Tensor& grad_out);

}  // namespace awf
