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

#include "maskmark/ops.hpp"

namespace maskmark {

// Per-pixel visibility budget: max of a luminance-adaptation term (over a
// 5x5 local mean) and a texture-masking term (proportional to gradient
// magnitude), rescaled to mean 1 per image. Constant with respect to
// gradients; larger values mean the eye tolerates more change there.
// img: [N,3,H,W] in [-1,1] -> [N,1,H,W], values >= 0.
Tensor jnd_map(const Tensor& img);

// I_wm = clamp(I_orig + mu * jnd * (I_enc - I_orig), -1, 1).
// Differentiable with respect to I_enc (and I_orig); jnd enters as a constant.
Tensor apply_jnd_modulation(const Tensor& orig, const Tensor& enc, const Tensor& jnd, real mu);

// Convenience overload computing the map from orig.
Tensor apply_jnd_modulation(const Tensor& orig, const Tensor& enc, real mu);

}  // namespace maskmark
