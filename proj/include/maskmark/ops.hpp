// Copyright 2026 The Maskmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <vector>

#include "maskmark/tensor.hpp"

namespace maskmark {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// alpha*a + beta*b, same shapes
Tensor axpby(const Tensor& a, real alpha, const Tensor& b, real beta);
// a*x + b
Tensor affine(const Tensor& x, real a, real b);
// y[n] = a[n]*x[n] + b[n], per leading-dim slice
Tensor per_sample_affine(const Tensor& x, const std::vector<real>& a, const std::vector<real>& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor clamp(const Tensor& x, real lo, real hi);
// x is [N,C,H,W], m is [N,1,H,W]; m is treated as a constant (no grad to m)
Tensor mul_bcast(const Tensor& x, const Tensor& m);
// Per-pixel blend toward the luminance channel: y_c = f*x_c + (1-f)*gray(x)
Tensor saturation_adjust(const Tensor& x, const std::vector<real>& f);

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor concat_channels(const std::vector<Tensor>& xs);
// Gathers sample slices; idx entries must be unique for backward correctness.
Tensor index_select_n(const Tensor& x, const std::vector<int>& idx);

// ---- dense / conv ----------------------------------------------------------

// x [N,Fin], w [Fout,Fin], b [Fout] (optional, pass undefined Tensor to skip)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x [N,C,H,W], w [F,C,kh,kw], b [F] (optional)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  real eps = real(1e-5));

// ---- resampling ------------------------------------------------------------

Tensor upsample_nearest2(const Tensor& x);
// Half-pixel mapping with clamped edges; identity when sizes match.
Tensor resize_bilinear(const Tensor& x, int oh, int ow);
Tensor hflip(const Tensor& x);
// Exact quarter-turn permutation, square inputs; k in {0,1,2,3}
Tensor rot90k(const Tensor& x, int k);
// Per-sample inverse maps (output pixel -> input pixel, row-major 3x3).
// bilinear=false samples nearest (no gradient path); out-of-frame reads 0.
Tensor warp_homography(const Tensor& x, const std::vector<std::array<double, 9>>& inv_maps,
                       bool bilinear);
Tensor pad_reflect(const Tensor& x, int ph, int pw);
// Valid 1-D convolution with a fixed (non-learnable) kernel. axis: 2=H, 3=W
Tensor conv1d_axis(const Tensor& x, const std::vector<real>& kernel, int axis);

// ---- reductions / losses ---------------------------------------------------

Tensor mean_all(const Tensor& x);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// ---- gradient control ------------------------------------------------------

// Output value is supplied by the caller; backward is the identity.
Tensor straight_through(const Tensor& x, std::vector<real> value);

}  // namespace maskmark
