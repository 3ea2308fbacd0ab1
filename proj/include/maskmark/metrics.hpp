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

#include <vector>

#include "maskmark/image_io.hpp"
#include "maskmark/mask.hpp"

namespace maskmark {

// Peak signal-to-noise ratio over the 8-bit pixel domain (peak 255), all
// channels pooled. Identical images report the documented 100 dB cap instead
// of infinity so aggregate means stay finite.
double psnr(const ImageU8& a, const ImageU8& b);

// Mean structural similarity: 11×11 Gaussian window (σ=1.5), k1=0.01,
// k2=0.03, weighted moments, valid windows only, per channel then averaged.
// Requires both spatial dims ≥ 11.
double ssim(const ImageU8& a, const ImageU8& b);

enum class IouClass { watermarked, unwatermarked };

// Intersection-over-union of the selected class region; both-empty = 1.0
// (perfect agreement about absence). Masks must be binary and equal-shape.
double iou(const Mask& pred, const Mask& gt, IouClass cls);

// Spearman rank correlation with average ranks for ties. Returns NaN when
// either side has zero rank variance (constant input).
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace maskmark
