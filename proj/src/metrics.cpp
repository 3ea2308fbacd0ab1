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

#include "maskmark/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "maskmark/common.hpp"

namespace maskmark {
namespace {

void check_same_shape(const ImageU8& a, const ImageU8& b) {
  check(a.h == b.h && a.w == b.w && a.c == b.c, "metric inputs must share a shape");
  check(a.h > 0 && a.w > 0 && (a.c == 1 || a.c == 3), "metric inputs must be images");
}

constexpr int kWin = 11;

// Normalized 11×11 Gaussian window, σ = 1.5.
const std::array<double, kWin * kWin>& ssim_window() {
  static const auto w = [] {
    std::array<double, kWin * kWin> win{};
    const double sigma = 1.5;
    double total = 0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
        win[size_t(i * kWin + j)] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
        total += win[size_t(i * kWin + j)];
      }
    for (auto& v : win) v /= total;
    return win;
  }();
  return w;
}

}  // namespace

double psnr(const ImageU8& a, const ImageU8& b) {
  check_same_shape(a, b);
  double se = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    se += d * d;
  }
  const double mse = se / double(a.data.size());
  if (mse == 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const ImageU8& a, const ImageU8& b) {
  check_same_shape(a, b);
  check(a.h >= kWin && a.w >= kWin, "ssim needs images at least 11x11");
  const auto& win = ssim_window();
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);

  double total = 0;
  int64_t windows = 0;
  for (int ch = 0; ch < a.c; ++ch) {
    for (int oy = 0; oy + kWin <= a.h; ++oy) {
      for (int ox = 0; ox + kWin <= a.w; ++ox) {
        double ux = 0, uy = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double wgt = win[size_t(i * kWin + j)];
            const double x = a.at(oy + i, ox + j, ch);
            const double y = b.at(oy + i, ox + j, ch);
            ux += wgt * x;
            uy += wgt * y;
            xx += wgt * x * x;
            yy += wgt * y * y;
            xy += wgt * x * y;
          }
        const double vx = xx - ux * ux;
        const double vy = yy - uy * uy;
        const double cov = xy - ux * uy;
        total += ((2 * ux * uy + c1) * (2 * cov + c2)) /
                 ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return total / double(windows);
}

double iou(const Mask& pred, const Mask& gt, IouClass cls) {
  check(pred.h == gt.h && pred.w == gt.w, "iou masks must share a shape");
  check(pred.is_binary() && gt.is_binary(), "iou requires binary masks");
  const real on = cls == IouClass::watermarked ? real(1) : real(0);
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] == on;
    const bool g = gt.data[i] == on;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  check_arg(x.size() == y.size(), "spearman_rho: length mismatch");
  check_arg(x.size() >= 2, "spearman_rho: needs at least two points");
  const size_t n = x.size();

  auto ranks = [n](const std::vector<double>& v) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // average rank of the tie run
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };

  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace maskmark
