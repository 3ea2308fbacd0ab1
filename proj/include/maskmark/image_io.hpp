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
#include <string>
#include <vector>

#include "maskmark/tensor.hpp"

namespace maskmark {

// Interleaved row-major 8-bit image; c is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<uint8_t> data;

  uint8_t& at(int y, int x, int ch) { return data[(size_t(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return data[(size_t(y) * w + x) * c + ch]; }
};

// Decodes a PNG or JPEG file (dispatch on magic bytes). Palette/16-bit/alpha
// PNG inputs are normalized to 8-bit gray or RGB. Throws on unreadable input.
ImageU8 load_image(const std::string& path);
ImageU8 decode_image(const std::vector<uint8_t>& bytes);

// PNG writers. `provenance`, when non-empty, is stored as a tEXt chunk under
// the key "maskmark" so embed outputs remain traceable to a config digest.
void save_png(const std::string& path, const ImageU8& img, const std::string& provenance = "");

// 1-bit grayscale PNG; values01 holds one byte per pixel, each 0 or 1.
void save_png_1bit(const std::string& path, int h, int w, const std::vector<uint8_t>& values01);

// Baseline JPEG, 4:4:4, quality in [1,100].
void save_jpeg(const std::string& path, const ImageU8& img, int quality);
std::vector<uint8_t> encode_jpeg(const ImageU8& img, int quality);

// Pixel-domain bridges. Tensors use [-1,1] (x = u/127.5 - 1); gray images are
// replicated to three channels on the way in. tensor_to_image quantizes with
// round-half-away and clamps, so tensor→image→tensor is within 1/255.
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& img);  // accepts [3,H,W] or [1,3,H,W]

inline uint8_t quantize_u8(real x) {
  real v = (x + real(1)) * real(127.5);
  int q = int(std::lround(double(v)));
  return uint8_t(q < 0 ? 0 : (q > 255 ? 255 : q));
}

}  // namespace maskmark
