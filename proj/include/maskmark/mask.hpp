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
#include <string>
#include <vector>

#include "maskmark/rng.hpp"
#include "maskmark/tensor.hpp"

namespace maskmark {

enum class MaskKind { full, rectangle, irregular, segment, composite };

const char* mask_kind_name(MaskKind k);

// Row-major h×w map, values in [0,1]. Generated ground-truth masks are
// strictly {0,1}; `composite` marks values produced by transformation rather
// than by one of the four generators.
struct Mask {
  int h = 0;
  int w = 0;
  MaskKind kind = MaskKind::composite;
  std::vector<real> data;

  real at(int y, int x) const { return data[size_t(y) * w + x]; }
  real& at(int y, int x) { return data[size_t(y) * w + x]; }
  bool is_binary() const;
};

struct MaskGenConfig {
  std::array<real, 2> rectangle_area_range{real(0.1), real(0.5)};
  std::array<int, 2> irregular_stroke_count_range{1, 5};
  // Brush width as a fraction of min(h, w).
  std::array<real, 2> irregular_brush_width_range{real(0.05), real(0.20)};
  std::string segment_source;
  // Draw weights for {full, rectangle, irregular, segment}.
  std::array<real, 4> type_weights{real(1), real(1), real(1), real(0)};

  void validate() const;  // throws invalid_argument on the first violation
};

Mask gen_full_mask(int h, int w);
Mask gen_rectangle_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg);
Mask gen_irregular_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg);
Mask gen_segment_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg);
Mask sample_training_mask(int h, int w, Rng& rng, const MaskGenConfig& cfg);

Mask invert_mask(const Mask& m);  // requires binary input

// Hard {0,1} mask: 1 iff soft > threshold (strictly). Input values in [0,1].
Mask binarize_mask(const Mask& soft, real threshold = real(0.5));

// n pairwise-disjoint square regions of area ≈ area_frac at fixed anchors,
// ordered center, top-left, top-right, bottom-left, bottom-right.
std::vector<Mask> multi_region_layout(int n, int h, int w, real area_frac);

double area_ratio(const Mask& m);

// Splits a binary mask into 4-connected components, one mask per component,
// largest first. Components smaller than min_area_frac of the frame are
// dropped as speckle.
std::vector<Mask> connected_components(const Mask& m, double min_area_frac);

// Tensor bridges: [N,1,h,w] with mask values copied verbatim.
Tensor mask_to_tensor(const Mask& m);
Tensor masks_to_tensor(const std::vector<Mask>& ms);
Mask mask_from_tensor(const Tensor& t, int n = 0);  // kind=composite

}  // namespace maskmark
