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

#include "maskmark/distortions.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "maskmark/common.hpp"
#include "maskmark/image_io.hpp"
#include "maskmark/jpeg_codec.hpp"
#include "maskmark/ops.hpp"

namespace maskmark {
namespace {

constexpr double kPi = 3.14159265358979323846;

void check_nchw(const Tensor& img) {
  check(img.ndim() == 4 && img.dim(1) == 3, "distortion expects [N,3,H,W]");
}

// ---- straight-through helpers ----

// Runs `fn` over the forward values of x and wraps the result so the backward
// pass is identity. fn sees row-major NCHW data.
Tensor ste_apply(const Tensor& x, const std::function<void(std::vector<real>&)>& fn) {
  std::vector<real> vals(x.data(), x.data() + x.numel());
  fn(vals);
  return straight_through(x, std::move(vals));
}

// ---- valuemetric kinds ----

Tensor jpeg_forward(const Tensor& img, int quality) {
  check_arg(quality >= 1 && quality <= 100, "invalid quality");
  check_nchw(img);
  const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
  const size_t plane = size_t(H) * W;
  return ste_apply(img, [&](std::vector<real>& v) {
    for (int n = 0; n < N; ++n) {
      ImageU8 u;
      u.h = H;
      u.w = W;
      u.c = 3;
      u.data.resize(plane * 3);
      for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < plane; ++p)
          u.data[p * 3 + size_t(c)] = quantize_u8(v[(size_t(n) * 3 + size_t(c)) * plane + p]);
      ImageU8 rt = jpeg_roundtrip_u8(u, quality);
      for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < plane; ++p)
          v[(size_t(n) * 3 + size_t(c)) * plane + p] = real(rt.data[p * 3 + size_t(c)]) / real(127.5) - real(1);
    }
  });
}

Tensor gaussian_filter(const Tensor& img, double sigma) {
  check_arg(sigma > 0, "gaussian filter sigma must be positive");
  check_nchw(img);
  const int H = img.dim(2), W = img.dim(3);
  // Truncate at 3σ; reflect padding limits the radius to dim-1.
  int r = std::min(int(std::ceil(3.0 * sigma)), std::min(H, W) - 1);
  r = std::max(r, 1);
  std::vector<real> k(size_t(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * double(i) * i / (sigma * sigma));
    k[size_t(i + r)] = real(v);
    sum += v;
  }
  for (auto& v : k) v = real(double(v) / sum);
  Tensor padded = pad_reflect(img, r, r);
  return clamp(conv1d_axis(conv1d_axis(padded, k, 2), k, 3), real(-1), real(1));
}

Tensor gaussian_noise(const Tensor& img, double sigma, Rng& rng) {
  check_arg(sigma >= 0, "noise stddev must be non-negative");
  Tensor noise = Tensor::randn(img.shape(), rng, sigma);
  return clamp(add(img, noise), real(-1), real(1));
}

Tensor median_filter(const Tensor& img, int k) {
  check_arg(k >= 1 && k % 2 == 1, "median kernel size must be odd");
  check_nchw(img);
  const int N = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  const int r = k / 2;
  check_arg(r < H && r < W, "median kernel larger than image");
  return ste_apply(img, [&](std::vector<real>& v) {
    std::vector<real> src = v;
    std::vector<real> win(size_t(k) * k);
    auto refl = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const size_t base = (size_t(n) * C + size_t(c)) * H * W;
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            size_t m = 0;
            for (int dy = -r; dy <= r; ++dy)
              for (int dx = -r; dx <= r; ++dx)
                win[m++] = src[base + size_t(refl(y + dy, H)) * W + size_t(refl(x + dx, W))];
            std::nth_element(win.begin(), win.begin() + long(m / 2), win.begin() + long(m));
            v[base + size_t(y) * W + x] = win[m / 2];
          }
      }
  });
}

Tensor salt_pepper(const Tensor& img, double ratio, Rng& rng) {
  check_arg(ratio >= 0 && ratio <= 1, "salt&pepper ratio out of range");
  check_nchw(img);
  const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
  const size_t plane = size_t(H) * W;
  // Draw one fate per pixel (shared across channels) before entering the
  // value closure so the rng consumption is independent of tensor contents.
  std::vector<int8_t> fate(size_t(N) * plane, 0);
  for (auto& f : fate) {
    const double u = rng.uniform01();
    f = u < ratio * 0.5 ? -1 : (u < ratio ? 1 : 0);
  }
  return ste_apply(img, [&](std::vector<real>& v) {
    for (int n = 0; n < N; ++n)
      for (size_t p = 0; p < plane; ++p) {
        const int8_t f = fate[size_t(n) * plane + p];
        if (f == 0) continue;
        for (int c = 0; c < 3; ++c) v[(size_t(n) * 3 + size_t(c)) * plane + p] = real(f);
      }
  });
}

Tensor resize_distortion(const Tensor& img, double factor) {
  check_arg(factor > 0, "resize factor must be positive");
  const int H = img.dim(2), W = img.dim(3);
  const int h2 = std::max(1, int(std::lround(H * factor)));
  const int w2 = std::max(1, int(std::lround(W * factor)));
  return resize_bilinear(resize_bilinear(img, h2, w2), H, W);
}

Tensor brightness_adjust(const Tensor& img, double f) {
  check_arg(f >= 0, "brightness factor must be non-negative");
  // u' = f·u in [0,1] becomes y = f·x + (f-1) in [-1,1].
  return clamp(affine(img, real(f), real(f - 1)), real(-1), real(1));
}

Tensor contrast_adjust(const Tensor& img, double f) {
  check_arg(f >= 0, "contrast factor must be non-negative");
  check_nchw(img);
  const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
  const size_t plane = size_t(H) * W;
  const real* d = img.data();
  // Blend toward the per-image mean luma. The pivot uses forward values only;
  // gradients flow through the f·x term.
  std::vector<real> scale(static_cast<size_t>(N), real(f));
  std::vector<real> bias(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    double m = 0;
    for (size_t p = 0; p < plane; ++p) {
      const size_t b = size_t(n) * 3 * plane + p;
      m += 0.299 * double(d[b]) + 0.587 * double(d[b + plane]) + 0.114 * double(d[b + 2 * plane]);
    }
    m /= double(plane);
    bias[size_t(n)] = real((1.0 - f) * m);
  }
  return clamp(per_sample_affine(img, scale, bias), real(-1), real(1));
}

Tensor hue_adjust(const Tensor& img, double shift) {
  check_arg(shift >= -0.5 && shift <= 0.5, "hue shift out of range [-0.5,0.5]");
  check_nchw(img);
  const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
  const size_t plane = size_t(H) * W;
  return ste_apply(img, [&](std::vector<real>& v) {
    for (int n = 0; n < N; ++n)
      for (size_t p = 0; p < plane; ++p) {
        const size_t b = size_t(n) * 3 * plane + p;
        // [-1,1] → [0,1] → HSV, rotate hue, back again.
        double r = (double(v[b]) + 1) / 2, g = (double(v[b + plane]) + 1) / 2,
               bl = (double(v[b + 2 * plane]) + 1) / 2;
        const double mx = std::max({r, g, bl}), mn = std::min({r, g, bl});
        const double d = mx - mn;
        double h = 0;
        if (d > 0) {
          if (mx == r) h = std::fmod((g - bl) / d, 6.0);
          else if (mx == g) h = (bl - r) / d + 2.0;
          else h = (r - g) / d + 4.0;
          h /= 6.0;
          if (h < 0) h += 1.0;
        }
        const double s = mx > 0 ? d / mx : 0.0;
        h = h + shift;
        h -= std::floor(h);
        const double c = mx * s;
        const double hp = h * 6.0;
        const double xm = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
        double r2 = 0, g2 = 0, b2 = 0;
        switch (int(hp) % 6) {
          case 0: r2 = c; g2 = xm; break;
          case 1: r2 = xm; g2 = c; break;
          case 2: g2 = c; b2 = xm; break;
          case 3: g2 = xm; b2 = c; break;
          case 4: r2 = xm; b2 = c; break;
          default: r2 = c; b2 = xm; break;
        }
        const double m = mx - c;
        v[b] = real((r2 + m) * 2 - 1);
        v[b + plane] = real((g2 + m) * 2 - 1);
        v[b + 2 * plane] = real((b2 + m) * 2 - 1);
      }
  });
}

// ---- geometric kinds ----

std::array<double, 9> rotation_inverse_map(double angle_deg, int H, int W) {
  const double t = angle_deg * kPi / 180.0;
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double c = std::cos(t), s = std::sin(t);
  // Source = c + R(-θ)·(out - c) in (x, y) order.
  return {c, -s, cx - c * cx + s * cy,  //
          s, c, cy - s * cx - c * cy,   //
          0, 0, 1};
}

// Homography with H·(from_i) ∝ to_i, solved with h33 = 1. Points are (x, y).
std::array<double, 9> solve_homography(const std::array<std::array<double, 2>, 4>& from,
                                       const std::array<std::array<double, 2>, 4>& to) {
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double X = from[size_t(i)][0], Y = from[size_t(i)][1];
    const double x = to[size_t(i)][0], y = to[size_t(i)][1];
    A.row(2 * i) << X, Y, 1, 0, 0, 0, -x * X, -x * Y;
    A.row(2 * i + 1) << 0, 0, 0, X, Y, 1, -y * X, -y * Y;
    b(2 * i) = x;
    b(2 * i + 1) = y;
  }
  Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(b);
  return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

std::array<double, 9> perspective_inverse_map(double scale, int H, int W, Rng& rng) {
  check_arg(scale >= 0 && scale <= 1, "perspective scale out of range");
  const double dy = scale * H / 2.0, dx = scale * W / 2.0;
  const std::array<std::array<double, 2>, 4> corners = {{
      {0, 0}, {double(W - 1), 0}, {double(W - 1), double(H - 1)}, {0, double(H - 1)}}};
  std::array<std::array<double, 2>, 4> displaced = corners;
  // Pull each corner inward by an independent draw, TL/TR/BR/BL order.
  displaced[0] = {rng.uniform(0.0, dx), rng.uniform(0.0, dy)};
  displaced[1] = {double(W - 1) - rng.uniform(0.0, dx), rng.uniform(0.0, dy)};
  displaced[2] = {double(W - 1) - rng.uniform(0.0, dx), double(H - 1) - rng.uniform(0.0, dy)};
  displaced[3] = {rng.uniform(0.0, dx), double(H - 1) - rng.uniform(0.0, dy)};
  // Output pixel at a displaced corner shows the original corner content, so
  // the sampling (output→source) map carries displaced → original.
  return solve_homography(displaced, corners);
}

std::pair<Tensor, Tensor> warp_pair(const Tensor& img, const Tensor& mask,
                                    const std::array<double, 9>& inv_map) {
  std::vector<std::array<double, 9>> maps(size_t(img.dim(0)), inv_map);
  Tensor wi = warp_homography(img, maps, /*bilinear=*/true);
  Tensor wm = warp_homography(mask, maps, /*bilinear=*/false);
  return {wi, wm};
}

// ---- plugin registry ----

std::map<std::string, DistortionPlugin>& plugin_registry() {
  static std::map<std::string, DistortionPlugin> reg;
  return reg;
}

}  // namespace

const char* distortion_kind_name(DistortionKind k) {
  switch (k) {
    case DistortionKind::identity: return "identity";
    case DistortionKind::jpeg: return "jpeg";
    case DistortionKind::gaussian_filter: return "gaussian_filter";
    case DistortionKind::gaussian_noise: return "gaussian_noise";
    case DistortionKind::median_filter: return "median_filter";
    case DistortionKind::salt_pepper: return "salt_pepper";
    case DistortionKind::resize: return "resize";
    case DistortionKind::brightness: return "brightness";
    case DistortionKind::contrast: return "contrast";
    case DistortionKind::saturation: return "saturation";
    case DistortionKind::hue: return "hue";
    case DistortionKind::rotation: return "rotation";
    case DistortionKind::perspective: return "perspective";
    case DistortionKind::hflip: return "hflip";
    case DistortionKind::plugin: return "plugin";
  }
  return "?";
}

DistortionKind distortion_kind_from_name(const std::string& name) {
  static const DistortionKind all[] = {
      DistortionKind::identity,     DistortionKind::jpeg,        DistortionKind::gaussian_filter,
      DistortionKind::gaussian_noise, DistortionKind::median_filter, DistortionKind::salt_pepper,
      DistortionKind::resize,       DistortionKind::brightness,  DistortionKind::contrast,
      DistortionKind::saturation,   DistortionKind::hue,         DistortionKind::rotation,
      DistortionKind::perspective,  DistortionKind::hflip,       DistortionKind::plugin,
  };
  for (DistortionKind k : all)
    if (name == distortion_kind_name(k)) return k;
  throw std::invalid_argument("unknown distortion kind: " + name);
}

bool is_geometric(DistortionKind k) {
  return k == DistortionKind::rotation || k == DistortionKind::perspective || k == DistortionKind::hflip;
}

DistortionPool DistortionPool::training_default() {
  DistortionPool p;
  p.specs = {
      {DistortionKind::jpeg, 50, 50, 1, ""},
      {DistortionKind::gaussian_filter, 5, 5, 1, ""},
      {DistortionKind::gaussian_noise, 0.1, 0.1, 1, ""},
      {DistortionKind::median_filter, 5, 5, 1, ""},
      {DistortionKind::salt_pepper, 0.1, 0.1, 1, ""},
      {DistortionKind::resize, 0.5, 0.5, 1, ""},
      {DistortionKind::brightness, 0.7, 1.3, 1, ""},
      {DistortionKind::contrast, 0.7, 1.3, 1, ""},
      {DistortionKind::saturation, 0.7, 1.3, 1, ""},
      {DistortionKind::hue, -0.1, 0.1, 1, ""},
      {DistortionKind::rotation, -90, 90, 1, ""},
      {DistortionKind::perspective, 0.1, 0.5, 1, ""},
      {DistortionKind::hflip, 0, 0, 1, ""},
  };
  return p;
}

DistortionPool DistortionPool::eval_valuemetric() {
  DistortionPool p;
  p.specs = {
      {DistortionKind::jpeg, 60, 60, 1, ""},
      {DistortionKind::gaussian_filter, 3, 3, 1, ""},
      {DistortionKind::gaussian_noise, 0.05, 0.05, 1, ""},
      {DistortionKind::median_filter, 3, 3, 1, ""},
      {DistortionKind::salt_pepper, 0.05, 0.05, 1, ""},
      {DistortionKind::resize, 0.5, 0.5, 1, ""},
      {DistortionKind::brightness, 0.7, 1.3, 1, ""},
      {DistortionKind::contrast, 0.7, 1.3, 1, ""},
      {DistortionKind::saturation, 0.7, 1.3, 1, ""},
      {DistortionKind::hue, -0.1, 0.1, 1, ""},
  };
  p.geometric_enabled = false;
  return p;
}

DistortionPool DistortionPool::eval_geometric() {
  DistortionPool p;
  p.specs = {
      {DistortionKind::rotation, -30, 30, 1, ""},
      {DistortionKind::perspective, 0.1, 0.3, 1, ""},
      {DistortionKind::hflip, 0, 0, 1, ""},
  };
  return p;
}

DistortionSpec sample_distortion(const DistortionPool& pool, Rng& rng, bool distortions_on) {
  if (!distortions_on) return DistortionSpec{};
  double total = 0;
  for (const auto& e : pool.specs) {
    if (is_geometric(e.kind) && !pool.geometric_enabled) continue;
    check_arg(e.weight >= 0, "pool weights must be non-negative");
    total += e.weight;
  }
  check(total > 0, "empty distortion pool in a distortion-enabled phase");
  double x = rng.uniform01() * total;
  const PoolEntry* pick = nullptr;
  for (const auto& e : pool.specs) {
    if (e.weight <= 0 || (is_geometric(e.kind) && !pool.geometric_enabled)) continue;
    x -= e.weight;
    pick = &e;
    if (x < 0) break;
  }
  DistortionSpec spec;
  spec.kind = pick->kind;
  spec.plugin_name = pick->plugin_name;
  spec.param = pick->lo == pick->hi ? pick->lo : rng.uniform(pick->lo, pick->hi);
  spec.seed = (uint64_t(rng.uniform_int(0, 1 << 30)) << 31) ^ uint64_t(rng.uniform_int(0, 1 << 30));
  return spec;
}

Tensor apply_valuemetric(const Tensor& img, const DistortionSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DistortionKind::identity: return img;
    case DistortionKind::jpeg: return jpeg_forward(img, int(std::lround(spec.param)));
    case DistortionKind::gaussian_filter: return gaussian_filter(img, spec.param);
    case DistortionKind::gaussian_noise: return gaussian_noise(img, spec.param, rng);
    case DistortionKind::median_filter: return median_filter(img, int(std::lround(spec.param)));
    case DistortionKind::salt_pepper: return salt_pepper(img, spec.param, rng);
    case DistortionKind::resize: return resize_distortion(img, spec.param);
    case DistortionKind::brightness: return brightness_adjust(img, spec.param);
    case DistortionKind::contrast: return contrast_adjust(img, spec.param);
    case DistortionKind::saturation: {
      check_arg(spec.param >= 0, "saturation factor must be non-negative");
      std::vector<real> f(static_cast<size_t>(img.dim(0)), real(spec.param));
      return clamp(saturation_adjust(img, f), real(-1), real(1));
    }
    case DistortionKind::hue: return hue_adjust(img, spec.param);
    case DistortionKind::plugin: return apply_distortion_plugin(spec.plugin_name, img, rng);
    default: throw std::invalid_argument("apply_valuemetric: not a valuemetric kind");
  }
}

std::pair<Tensor, Tensor> apply_geometric(const Tensor& img, const Tensor& mask,
                                          const DistortionSpec& spec, Rng& rng) {
  check(img.ndim() == 4 && mask.ndim() == 4, "apply_geometric expects NCHW");
  check(img.dim(0) == mask.dim(0) && img.dim(2) == mask.dim(2) && img.dim(3) == mask.dim(3),
        "apply_geometric: image/mask shape mismatch");
  const int H = img.dim(2), W = img.dim(3);
  switch (spec.kind) {
    case DistortionKind::identity:
      return {img, mask};
    case DistortionKind::hflip:
      return {hflip(img), hflip(mask)};
    case DistortionKind::rotation: {
      const double angle = spec.param;
      const double quarter = angle / 90.0;
      // Exact quarter turns on square frames are index permutations: no
      // resampling loss, masks stay bit-exact.
      if (H == W && quarter == std::floor(quarter)) {
        int k = int(quarter) % 4;
        if (k < 0) k += 4;
        if (k == 0) return {img, mask};
        return {rot90k(img, k), rot90k(mask, k)};
      }
      return warp_pair(img, mask, rotation_inverse_map(angle, H, W));
    }
    case DistortionKind::perspective:
      return warp_pair(img, mask, perspective_inverse_map(spec.param, H, W, rng));
    default:
      throw std::invalid_argument("apply_geometric: not a geometric kind");
  }
}

Tensor differentiable_jpeg(const Tensor& img, int quality) {
  return jpeg_forward(img, quality);
}

void register_distortion_plugin(const std::string& name, DistortionPlugin fn) {
  check_arg(!name.empty() && fn != nullptr, "plugin needs a name and a callable");
  plugin_registry()[name] = std::move(fn);
}

bool has_distortion_plugin(const std::string& name) {
  return plugin_registry().count(name) != 0;
}

Tensor apply_distortion_plugin(const std::string& name, const Tensor& img, Rng& rng) {
  auto it = plugin_registry().find(name);
  check(it != plugin_registry().end(), "unknown distortion plugin: " + name);
  try {
    Tensor out = it->second(img, rng);
    check(out.shape() == img.shape(), "plugin output shape mismatch");
    return out;
  } catch (const std::exception& e) {
    throw std::runtime_error("distortion plugin '" + name + "' failed: " + e.what());
  }
}

}  // namespace maskmark
