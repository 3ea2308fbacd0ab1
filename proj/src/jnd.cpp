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

#include "maskmark/jnd.hpp"

#include <cmath>

namespace maskmark {

namespace {

// Luminance-adaptation visibility threshold over 8-bit background luminance:
// high in the dark (Weber breakdown), mildly rising in bright regions.
inline double lum_adapt(double bg) {
  if (bg <= 127.0) return 17.0 * (1.0 - std::sqrt(bg / 127.0)) + 3.0;
  return 3.0 / 128.0 * (bg - 127.0) + 3.0;
}

constexpr double kTextureGain = 0.117;  // texture term per unit Sobel magnitude

}  // namespace

Tensor jnd_map(const Tensor& img) {
  check(img.ndim() == 4 && img.dim(1) == 3, "jnd_map: expects [N,3,H,W]");
  NoGradGuard ng;
  const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
  const int64_t hw = int64_t(H) * W;

  // luminance in the 8-bit domain
  Tensor lum = Tensor::zeros({N, 1, H, W});
  {
    const real* p = img.data();
    real* q = lum.data();
    for (int n = 0; n < N; ++n)
      for (int64_t i = 0; i < hw; ++i) {
        const real g = real(0.299) * p[(n * 3 + 0) * hw + i] +
                       real(0.587) * p[(n * 3 + 1) * hw + i] +
                       real(0.114) * p[(n * 3 + 2) * hw + i];
        q[n * hw + i] = (g + 1) * real(127.5);
      }
  }

  // 5x5 local mean for the adaptation term
  const std::vector<real> box5(5, real(0.2));
  Tensor bg = conv1d_axis(conv1d_axis(pad_reflect(lum, 2, 2), box5, 2), box5, 3);

  // Sobel gradient magnitude for the texture term
  const std::vector<real> smooth = {1, 2, 1};
  const std::vector<real> diff = {1, 0, -1};
  Tensor padded = pad_reflect(lum, 1, 1);
  Tensor gx = conv1d_axis(conv1d_axis(padded, smooth, 2), diff, 3);
  Tensor gy = conv1d_axis(conv1d_axis(padded, diff, 2), smooth, 3);

  Tensor out = Tensor::zeros({N, 1, H, W});
  const real* pb = bg.data();
  const real* px = gx.data();
  const real* py = gy.data();
  real* po = out.data();
  for (int n = 0; n < N; ++n) {
    double sum = 0;
    for (int64_t i = 0; i < hw; ++i) {
      const double grad = std::sqrt(double(px[n * hw + i]) * px[n * hw + i] +
                                    double(py[n * hw + i]) * py[n * hw + i]);
      const double v = std::max(lum_adapt(pb[n * hw + i]), kTextureGain * grad);
      po[n * hw + i] = real(v);
      sum += v;
    }
    // rescale to mean 1 so the modulation strength is image-independent
    const double mean = std::max(sum / double(hw), 1e-12);
    for (int64_t i = 0; i < hw; ++i) po[n * hw + i] = real(po[n * hw + i] / mean);
  }
  return out;
}

Tensor apply_jnd_modulation(const Tensor& orig, const Tensor& enc, const Tensor& jnd,
                            real mu) {
  check(same_shape(orig, enc), "apply_jnd_modulation: shape mismatch");
  check_arg(mu >= 0, "apply_jnd_modulation: mu must be >= 0");
  Tensor residual = mul_bcast(sub(enc, orig), jnd);
  return clamp(add(orig, affine(residual, mu, 0)), -1, 1);
}

Tensor apply_jnd_modulation(const Tensor& orig, const Tensor& enc, real mu) {
  return apply_jnd_modulation(orig, enc, jnd_map(orig), mu);
}

}  // namespace maskmark
