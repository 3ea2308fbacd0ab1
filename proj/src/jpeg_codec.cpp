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

#include "maskmark/jpeg_codec.hpp"

#include <array>
#include <cmath>

#include "maskmark/common.hpp"

namespace maskmark {
namespace {

// Base quantization tables from the JPEG standard (Annex K).
constexpr std::array<int, 64> kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};
constexpr std::array<int, 64> kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,
};

int scale_entry(int base, int quality) {
  // libjpeg quality mapping: linear above 50, reciprocal below.
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  int v = (base * scale + 50) / 100;
  return v < 1 ? 1 : (v > 255 ? 255 : v);
}

// Orthonormal 8×8 DCT-II basis: A[u][x] = sqrt((u==0?1:2)/8)·cos((2x+1)uπ/16).
struct DctBasis {
  double a[8][8];
  DctBasis() {
    const double pi = std::acos(-1.0);
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        a[u][x] = std::sqrt((u == 0 ? 1.0 : 2.0) / 8.0) * std::cos((2 * x + 1) * u * pi / 16.0);
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

// block ← A·block·Aᵀ, i.e. 2-D forward DCT; inverse is Aᵀ·block·A.
void dct2d(double block[8][8], bool forward) {
  const auto& A = basis().a;
  double tmp[8][8];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += (forward ? A[u][k] : A[k][u]) * block[k][x];
      tmp[u][x] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[u][k] * (forward ? A[v][k] : A[k][v]);
      block[u][v] = s;
    }
}

// Quantize one padded plane in place. Values are centered around 0 on entry.
void code_plane(std::vector<double>& plane, int ph, int pw, const std::array<int, 64>& base, int quality) {
  for (int by = 0; by < ph; by += 8)
    for (int bx = 0; bx < pw; bx += 8) {
      double block[8][8];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) block[y][x] = plane[size_t(by + y) * pw + (bx + x)];
      dct2d(block, true);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const int q = scale_entry(base[size_t(y) * 8 + x], quality);
          block[y][x] = std::round(block[y][x] / q) * q;
        }
      dct2d(block, false);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) plane[size_t(by + y) * pw + (bx + x)] = block[y][x];
    }
}

uint8_t clamp_u8(double v) {
  int q = int(std::lround(v));
  return uint8_t(q < 0 ? 0 : (q > 255 ? 255 : q));
}

}  // namespace

int jpeg_quant_entry(int table, int index, int quality) {
  check_arg(table == 0 || table == 1, "jpeg_quant_entry: table must be 0 or 1");
  check_arg(index >= 0 && index < 64, "jpeg_quant_entry: index out of range");
  check_arg(quality >= 1 && quality <= 100, "invalid quality");
  return scale_entry((table == 0 ? kLumaBase : kChromaBase)[size_t(index)], quality);
}

ImageU8 jpeg_roundtrip_u8(const ImageU8& img, int quality) {
  check_arg(quality >= 1 && quality <= 100, "invalid quality");
  check(img.c == 1 || img.c == 3, "jpeg_roundtrip_u8 expects gray or rgb");
  check(img.h > 0 && img.w > 0, "jpeg_roundtrip_u8: empty image");
  const int h = img.h, w = img.w;
  const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

  // Color convert (JFIF YCbCr) into edge-replicated padded planes, level
  // shifted so every plane is centered at zero.
  const int nc = img.c;
  std::vector<std::vector<double>> planes(size_t(nc), std::vector<double>(size_t(ph) * pw));
  for (int y = 0; y < ph; ++y) {
    const int sy = y < h ? y : h - 1;
    for (int x = 0; x < pw; ++x) {
      const int sx = x < w ? x : w - 1;
      if (nc == 1) {
        planes[0][size_t(y) * pw + x] = double(img.at(sy, sx, 0)) - 128.0;
      } else {
        const double r = img.at(sy, sx, 0), g = img.at(sy, sx, 1), b = img.at(sy, sx, 2);
        planes[0][size_t(y) * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
        planes[1][size_t(y) * pw + x] = -0.168736 * r - 0.331264 * g + 0.5 * b;
        planes[2][size_t(y) * pw + x] = 0.5 * r - 0.418688 * g - 0.081312 * b;
      }
    }
  }
  code_plane(planes[0], ph, pw, kLumaBase, quality);
  for (int c = 1; c < nc; ++c) code_plane(planes[size_t(c)], ph, pw, kChromaBase, quality);

  ImageU8 out;
  out.h = h;
  out.w = w;
  out.c = nc;
  out.data.resize(size_t(h) * w * nc);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (nc == 1) {
        out.at(y, x, 0) = clamp_u8(planes[0][size_t(y) * pw + x] + 128.0);
      } else {
        const double Y = planes[0][size_t(y) * pw + x] + 128.0;
        const double cb = planes[1][size_t(y) * pw + x];
        const double cr = planes[2][size_t(y) * pw + x];
        out.at(y, x, 0) = clamp_u8(Y + 1.402 * cr);
        out.at(y, x, 1) = clamp_u8(Y - 0.344136 * cb - 0.714136 * cr);
        out.at(y, x, 2) = clamp_u8(Y + 1.772 * cb);
      }
    }
  return out;
}

}  // namespace maskmark
