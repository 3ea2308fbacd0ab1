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

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "maskmark/mask.hpp"
#include "maskmark/models.hpp"

namespace maskmark {

// User-facing embedding and decoding. All functions take single images as
// [1,3,H,W] tensors in [-1,1] (see image_to_tensor) and never build a
// gradient graph; model parameters are only read, so concurrent calls over
// one bundle are safe.

// Decoded watermark: the predicted region, the bits read from it, and how
// confident the localizer was inside that region.
struct ExtractionResult {
  Mask mask;                     // hard predicted mask at the model resolution
  std::vector<uint8_t> message;  // cfg.l bits from the whole predicted region
  double mean_mask_confidence = 0;  // mean soft-mask value where mask is 1
  bool resized = false;  // input was off-native and resized before decoding
  // Filled by extract_multi: one (region, bits) pair per connected component
  // of `mask`, pairwise disjoint, specks below the area floor dropped.
  std::vector<std::pair<Mask, std::vector<uint8_t>>> per_region;
};

// Whole-frame embedding. D encodes the image directly; ED runs with a full
// mask. Off-native sizes route through embed_arbitrary_resolution. mu
// defaults to the variant's tuned strength (ModelConfig::default_mu); 0
// returns the input unchanged.
Tensor embed_global(const ModelBundle& model, const Tensor& image,
                    const std::vector<uint8_t>& bits, std::optional<double> mu = {});

// Region-restricted embedding (ED only): encode with the mask channel,
// modulate, then blend so every pixel outside `m` is the bit-exact original.
Tensor embed_local(const ModelBundle& model, const Tensor& image,
                   const std::vector<uint8_t>& bits, const Mask& m,
                   std::optional<double> mu = {});

// Fixed-resolution models applied at any size: normalize, resize to native,
// embed there, resize the watermark residual back, add and clamp. At the
// native size this is exactly embed_global.
Tensor embed_arbitrary_resolution(const ModelBundle& model, const Tensor& image,
                                  const std::vector<uint8_t>& bits,
                                  std::optional<double> mu = {});

// Localize-then-extract: predict the soft mask, binarize at `threshold`,
// zero everything outside the predicted region, and read the bits from what
// remains. Off-native inputs are resized to the model resolution first
// (result.resized reports it). Throws "no watermark region detected" when
// the binarized mask is empty — absence, as opposed to a low-confidence
// read, which still returns a result.
ExtractionResult locate_and_extract(const ModelBundle& model, const Tensor& image,
                                    real threshold = real(0.5));

// locate_and_extract plus per-region decoding: the hard mask is split into
// 4-connected components, components below min_area_frac of the frame are
// discarded, and each surviving region is isolated and decoded on its own.
ExtractionResult extract_multi(const ModelBundle& model, const Tensor& image,
                               real threshold = real(0.5), double min_area_frac = 0.001);

}  // namespace maskmark
