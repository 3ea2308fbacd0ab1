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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "maskmark/distortions.hpp"
#include "maskmark/image_io.hpp"
#include "maskmark/jpeg_codec.hpp"
#include "maskmark/mask.hpp"
#include "maskmark/ops.hpp"

using namespace maskmark;

namespace {

Tensor smooth_image(int n, int h, int w) {
  Tensor t = Tensor::zeros({n, 3, h, w});
  real* p = t.data();
  size_t i = 0;
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          p[i++] = real(0.8) * real(std::sin(0.3 * x + 0.2 * y + c + s)) * real(0.5);
  return t;
}

Tensor random_image(int n, int h, int w, uint64_t seed) {
  Rng rng(seed);
  return Tensor::rand_uniform({n, 3, h, w}, rng, real(-0.9), real(0.9));
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  real m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor rect_mask(int h, int w, real lo, real hi, Rng& rng) {
  MaskGenConfig cfg;
  cfg.rectangle_area_range = {lo, hi};
  return mask_to_tensor(gen_rectangle_mask(h, w, rng, cfg));
}

DistortionSpec spec_of(DistortionKind k, double param) {
  DistortionSpec s;
  s.kind = k;
  s.param = param;
  return s;
}

bool tensor_is_binary(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t.data()[i] != real(0) && t.data()[i] != real(1)) return false;
  return true;
}

// Uniform-gradient scalar loss; its input gradient isolates the op's local
// jacobian row sums.
real check_grad_is_scaled_identity(DistortionKind k, double param, real scale) {
  Rng rng(99);
  Tensor x = random_image(2, 8, 8, 42);
  x.set_requires_grad(true);
  Tensor y = apply_valuemetric(x, spec_of(k, param), rng);
  Tensor loss = mean_all(y);
  loss.backward();
  const real want = scale / real(x.numel());
  real worst = 0;
  for (int64_t i = 0; i < x.numel(); ++i)
    worst = std::max(worst, std::abs(x.grad_data()[i] - want));
  return worst;
}

}  // namespace

TEST_CASE("kind names and geometric classification") {
  CHECK(std::string(distortion_kind_name(DistortionKind::jpeg)) == "jpeg");
  CHECK(std::string(distortion_kind_name(DistortionKind::salt_pepper)) == "salt_pepper");
  CHECK(std::string(distortion_kind_name(DistortionKind::perspective)) == "perspective");
  CHECK(is_geometric(DistortionKind::rotation));
  CHECK(is_geometric(DistortionKind::perspective));
  CHECK(is_geometric(DistortionKind::hflip));
  CHECK_FALSE(is_geometric(DistortionKind::jpeg));
  CHECK_FALSE(is_geometric(DistortionKind::gaussian_noise));
  CHECK_FALSE(is_geometric(DistortionKind::identity));
}

TEST_CASE("identity and neutral parameters leave the image unchanged") {
  Rng rng(1);
  Tensor x = random_image(2, 12, 12, 7);
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::identity, 0), rng), x) == 0);
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::brightness, 1.0), rng), x) == 0);
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::contrast, 1.0), rng), x) <
        real(1e-6));
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::saturation, 1.0), rng), x) <
        real(1e-5));
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::resize, 1.0), rng), x) <
        real(1e-5));
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::gaussian_noise, 0.0), rng), x) ==
        0);
}

TEST_CASE("median filter of size 1 and hue shift of zero are no-ops") {
  Rng rng(2);
  Tensor x = random_image(1, 9, 9, 8);
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::median_filter, 1), rng), x) == 0);
  CHECK(max_abs_diff(apply_valuemetric(x, spec_of(DistortionKind::hue, 0.0), rng), x) <
        real(2e-3));  // u8-free HSV round trip, float arithmetic only
}

TEST_CASE("hflip is an involution and moves mask with image") {
  Rng rng(3);
  Tensor x = random_image(2, 10, 14, 9);
  Tensor m = Tensor::zeros({2, 1, 10, 14});
  m.data()[3] = 1;  // (0, 3) in sample 0
  auto [x1, m1] = apply_geometric(x, m, spec_of(DistortionKind::hflip, 0), rng);
  CHECK(m1.data()[14 - 1 - 3] == real(1));
  CHECK(x1.data()[14 - 1 - 3] == x.data()[3]);
  auto [x2, m2] = apply_geometric(x1, m1, spec_of(DistortionKind::hflip, 0), rng);
  CHECK(max_abs_diff(x2, x) == 0);
  CHECK(max_abs_diff(m2, m) == 0);
}

TEST_CASE("quarter-turn rotation on square frames is an exact permutation") {
  Rng rng(4);
  Tensor x = random_image(1, 8, 8, 10);
  Tensor m = rect_mask(8, 8, real(0.2), real(0.4), rng);

  auto [x0, m0] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 0), rng);
  CHECK(max_abs_diff(x0, x) == 0);

  // Four quarter turns come home exactly.
  Tensor xi = x, mi = m;
  for (int i = 0; i < 4; ++i) {
    auto [xn, mn] = apply_geometric(xi, mi, spec_of(DistortionKind::rotation, 90), rng);
    xi = xn;
    mi = mn;
    CHECK(tensor_is_binary(mi));
  }
  CHECK(max_abs_diff(xi, x) == 0);
  CHECK(max_abs_diff(mi, m) == 0);

  // +90 then -90 cancels; 180 twice cancels; -270 equals +90.
  auto [xp, mp] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 90), rng);
  auto [xb, mb] = apply_geometric(xp, mp, spec_of(DistortionKind::rotation, -90), rng);
  CHECK(max_abs_diff(xb, x) == 0);
  CHECK(max_abs_diff(mb, m) == 0);
  auto [xq, mq] = apply_geometric(x, m, spec_of(DistortionKind::rotation, -270), rng);
  CHECK(max_abs_diff(xq, xp) == 0);
  CHECK(max_abs_diff(mq, mp) == 0);

  // Values are permuted, never invented: multisets of pixels are preserved.
  std::multiset<real> before(x.data(), x.data() + x.numel());
  std::multiset<real> after(xp.data(), xp.data() + xp.numel());
  CHECK(before == after);
}

TEST_CASE("continuous rotation converges to the exact quarter-turn path") {
  Rng rng(5);
  Tensor x = smooth_image(1, 16, 16);
  Tensor m = rect_mask(16, 16, real(0.2), real(0.3), rng);
  auto [exact_x, exact_m] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 90), rng);
  auto [warp_x, warp_m] =
      apply_geometric(x, m, spec_of(DistortionKind::rotation, 89.9999999), rng);
  CHECK(max_abs_diff(warp_x, exact_x) < real(1e-3));
  CHECK(max_abs_diff(warp_m, exact_m) == 0);  // nearest rounding absorbs the epsilon
}

TEST_CASE("oblique rotation keeps the mask binary and roughly area-preserving") {
  Rng rng(6);
  const int S = 32;
  Tensor x = smooth_image(1, S, S);
  // Centered disk so the rotated support stays in frame.
  Tensor m = Tensor::zeros({1, 1, S, S});
  int on = 0;
  for (int y = 0; y < S; ++y)
    for (int x2 = 0; x2 < S; ++x2) {
      const double dy = y - (S - 1) / 2.0, dx = x2 - (S - 1) / 2.0;
      if (dy * dy + dx * dx <= 8.0 * 8.0) {
        m.data()[y * S + x2] = 1;
        ++on;
      }
    }
  auto [xr, mr] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 30), rng);
  CHECK(tensor_is_binary(mr));
  int on_after = 0;
  for (int64_t i = 0; i < mr.numel(); ++i) on_after += mr.data()[i] == real(1) ? 1 : 0;
  CHECK(std::abs(on_after - on) <= on / 10);
  // Center pixel of a centered disk survives any rotation.
  CHECK(mr.data()[(S / 2) * S + S / 2] == real(1));
  CHECK(xr.shape() == x.shape());
}

TEST_CASE("rotating a full mask out of frame fills with zero") {
  Rng rng(7);
  const int S = 24;
  Tensor x = smooth_image(1, S, S);
  Tensor m = mask_to_tensor(gen_full_mask(S, S));
  auto [xr, mr] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 45), rng);
  CHECK(tensor_is_binary(mr));
  CHECK(mr.data()[0] == real(0));          // corner leaves the frame
  CHECK(mr.data()[S - 1] == real(0));
  CHECK(mr.data()[(S / 2) * S + S / 2] == real(1));
  real total = 0;
  for (int64_t i = 0; i < mr.numel(); ++i) total += mr.data()[i];
  CHECK(total / real(S * S) > real(0.7));  // octagonal overlap keeps most area
  CHECK(total / real(S * S) < real(0.95));
}

TEST_CASE("perspective pulls corners inward and is seed-reproducible") {
  Tensor x = smooth_image(2, 16, 16);
  Tensor mm = Tensor::full({2, 1, 16, 16}, real(1));

  DistortionSpec s = spec_of(DistortionKind::perspective, 0.4);
  Rng ra(11), rb(11), rc(12);
  auto [xa, ma] = apply_geometric(x, mm, s, ra);
  auto [xb, mb] = apply_geometric(x, mm, s, rb);
  auto [xc, mc] = apply_geometric(x, mm, s, rc);
  CHECK(max_abs_diff(xa, xb) == 0);
  CHECK(max_abs_diff(ma, mb) == 0);
  CHECK(max_abs_diff(xa, xc) > 0);  // different draw, different warp

  CHECK(tensor_is_binary(ma));
  // The warped content occupies a shrunken quadrilateral: the full-ones mask
  // must lose area but keep its center.
  real total = 0;
  for (size_t i = 0; i < size_t(16 * 16); ++i) total += ma.data()[i];
  CHECK(total < real(16 * 16));
  CHECK(ma.data()[8 * 16 + 8] == real(1));
}

TEST_CASE("perspective scale zero is the identity warp") {
  Rng rng(13);
  Tensor x = smooth_image(1, 12, 12);
  Tensor m = mask_to_tensor(gen_full_mask(12, 12));
  auto [xr, mr] = apply_geometric(x, m, spec_of(DistortionKind::perspective, 0.0), rng);
  CHECK(max_abs_diff(xr, x) < real(1e-5));
  CHECK(max_abs_diff(mr, m) == 0);
}

TEST_CASE("gaussian noise statistics match the requested sigma") {
  Rng rng(20);
  Tensor x = Tensor::zeros({1, 3, 64, 64});
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::gaussian_noise, 0.1), rng);
  double mean = 0, var = 0;
  for (int64_t i = 0; i < y.numel(); ++i) mean += double(y.data()[i]);
  mean /= double(y.numel());
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double d = double(y.data()[i]) - mean;
    var += d * d;
  }
  var /= double(y.numel());
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.1));
  // Output respects the value range even for saturating noise.
  Tensor near_top = Tensor::full({1, 3, 16, 16}, real(0.99));
  Tensor z = apply_valuemetric(near_top, spec_of(DistortionKind::gaussian_noise, 0.5), rng);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] <= real(1));
}

TEST_CASE("salt and pepper flips the requested fraction with shared channel fate") {
  Rng rng(21);
  Tensor x = Tensor::zeros({1, 3, 64, 64});
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::salt_pepper, 0.2), rng);
  const int hw = 64 * 64;
  int salt = 0, pepper = 0, untouched = 0;
  for (int p = 0; p < hw; ++p) {
    const real v0 = y.data()[p];
    CHECK(y.data()[hw + p] == v0);      // all channels share the pixel's fate
    CHECK(y.data()[2 * hw + p] == v0);
    if (v0 == real(1)) ++salt;
    else if (v0 == real(-1)) ++pepper;
    else {
      CHECK(v0 == real(0));
      ++untouched;
    }
  }
  CHECK(double(salt) / hw == doctest::Approx(0.1).epsilon(0.25));
  CHECK(double(pepper) / hw == doctest::Approx(0.1).epsilon(0.25));
  CHECK(double(untouched) / hw == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("gaussian filter smooths and preserves flat regions") {
  Rng rng(22);
  Tensor flat = Tensor::full({1, 3, 16, 16}, real(0.25));
  Tensor yf = apply_valuemetric(flat, spec_of(DistortionKind::gaussian_filter, 5), rng);
  CHECK(max_abs_diff(yf, flat) < real(1e-5));  // reflect padding keeps DC exact

  Tensor x = random_image(1, 16, 16, 30);
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::gaussian_filter, 3), rng);
  // Blurring shrinks variation around the (preserved) mean.
  auto variance = [](const Tensor& t) {
    double m = 0;
    for (int64_t i = 0; i < t.numel(); ++i) m += double(t.data()[i]);
    m /= double(t.numel());
    double v = 0;
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double d = double(t.data()[i]) - m;
      v += d * d;
    }
    return v / double(t.numel());
  };
  CHECK(variance(y) < 0.2 * variance(x));
}

TEST_CASE("median filter removes isolated impulses") {
  Rng rng(23);
  Tensor x = Tensor::full({1, 3, 9, 9}, real(0.5));
  x.data()[4 * 9 + 4] = real(-1);  // lone outlier in channel 0
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::median_filter, 3), rng);
  CHECK(y.data()[4 * 9 + 4] == real(0.5));
}

TEST_CASE("resize round trip loses detail but keeps shape and range") {
  Rng rng(24);
  Tensor x = random_image(1, 16, 16, 31);
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::resize, 0.5), rng);
  CHECK(y.shape() == x.shape());
  CHECK(max_abs_diff(y, x) > 0);
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y.data()[i] <= real(1));
    CHECK(y.data()[i] >= real(-1));
  }
}

TEST_CASE("color adjustments match closed forms") {
  Rng rng(25);
  Tensor x = random_image(2, 6, 6, 32);

  // Brightness: x ↦ f·x + (f−1) in [−1,1] coordinates, i.e. u ↦ f·u on [0,1].
  Tensor yb = apply_valuemetric(x, spec_of(DistortionKind::brightness, 0.8), rng);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const real want = std::clamp(real(0.8) * x.data()[i] + real(0.8 - 1.0), real(-1), real(1));
    CHECK(yb.data()[i] == doctest::Approx(want).epsilon(1e-5));
  }

  // Contrast: pivot at the per-sample luma mean.
  Tensor yc = apply_valuemetric(x, spec_of(DistortionKind::contrast, 0.5), rng);
  const int chw = 3 * 6 * 6, hw = 6 * 6;
  for (int n = 0; n < 2; ++n) {
    double m = 0;
    for (int p = 0; p < hw; ++p)
      m += 0.299 * double(x.data()[n * chw + p]) + 0.587 * double(x.data()[n * chw + hw + p]) +
           0.114 * double(x.data()[n * chw + 2 * hw + p]);
    m /= double(hw);
    for (int i = 0; i < chw; ++i) {
      const double want = std::clamp(m + 0.5 * (double(x.data()[n * chw + i]) - m), -1.0, 1.0);
      CHECK(double(yc.data()[n * chw + i]) == doctest::Approx(want).epsilon(1e-4));
    }
  }

  // Saturation zero collapses to the luma channel.
  Tensor ys = apply_valuemetric(x, spec_of(DistortionKind::saturation, 0.0), rng);
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < hw; ++p) {
      CHECK(ys.data()[n * chw + p] == doctest::Approx(ys.data()[n * chw + hw + p]).epsilon(1e-5));
      CHECK(ys.data()[n * chw + p] ==
            doctest::Approx(ys.data()[n * chw + 2 * hw + p]).epsilon(1e-5));
    }
}

TEST_CASE("hue shift permutes the color wheel by thirds") {
  Rng rng(26);
  // Pure red in [−1,1] coordinates.
  Tensor x = Tensor::zeros({1, 3, 2, 2});
  for (int p = 0; p < 4; ++p) {
    x.data()[p] = 1;
    x.data()[4 + p] = -1;
    x.data()[8 + p] = -1;
  }
  // +1/3 of the circle sends red to green.
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::hue, 1.0 / 3.0), rng);
  CHECK(y.data()[0] == doctest::Approx(-1).epsilon(1e-3));
  CHECK(y.data()[4] == doctest::Approx(1).epsilon(1e-3));
  CHECK(y.data()[8] == doctest::Approx(-1).epsilon(1e-3));
}

TEST_CASE("jpeg distortion equals the codec through the pixel bridge") {
  Rng rng(27);
  Tensor x = random_image(2, 16, 16, 33);
  Tensor y = apply_valuemetric(x, spec_of(DistortionKind::jpeg, 50), rng);
  CHECK(max_abs_diff(y, differentiable_jpeg(x, 50)) == 0);
  for (int n = 0; n < 2; ++n) {
    Tensor one = index_select_n(x, {n});
    ImageU8 u8 = tensor_to_image(one);
    ImageU8 rt = jpeg_roundtrip_u8(u8, 50);
    Tensor want = image_to_tensor(rt);
    Tensor got = index_select_n(y, {n});
    CHECK(max_abs_diff(got, want) == 0);
  }
}

TEST_CASE("straight-through kinds back-propagate the identity") {
  CHECK(check_grad_is_scaled_identity(DistortionKind::jpeg, 50, 1) == 0);
  CHECK(check_grad_is_scaled_identity(DistortionKind::median_filter, 3, 1) == 0);
  CHECK(check_grad_is_scaled_identity(DistortionKind::salt_pepper, 0.1, 1) == 0);
  CHECK(check_grad_is_scaled_identity(DistortionKind::hue, 0.05, 1) == 0);
  CHECK(check_grad_is_scaled_identity(DistortionKind::gaussian_noise, 0.05, 1) <
        real(1e-7));
  // True gradients where the op is differentiable: brightness and contrast
  // scale by the factor (pivot is treated as a constant).
  CHECK(check_grad_is_scaled_identity(DistortionKind::brightness, 0.9, real(0.9)) < real(1e-6));
  CHECK(check_grad_is_scaled_identity(DistortionKind::contrast, 0.8, real(0.8)) < real(1e-5));
}

TEST_CASE("geometric warps carry gradients through bilinear sampling") {
  Rng rng(28);
  Tensor x = smooth_image(1, 12, 12);
  x.set_requires_grad(true);
  Tensor m = mask_to_tensor(gen_full_mask(12, 12));
  auto [xr, mr] = apply_geometric(x, m, spec_of(DistortionKind::rotation, 30), rng);
  Tensor loss = mean_all(xr);
  loss.backward();
  REQUIRE(x.grad_data() != nullptr);
  real total = 0;
  bool finite = true;
  for (int64_t i = 0; i < x.numel(); ++i) {
    finite = finite && std::isfinite(double(x.grad_data()[i]));
    total += x.grad_data()[i];
  }
  CHECK(finite);
  CHECK(total > 0);
}

TEST_CASE("sampling honors phase, weights, and ranges") {
  Rng rng(40);
  DistortionPool pool = DistortionPool::training_default();
  CHECK(pool.specs.size() == 13);

  // Distortions off → identity regardless of pool.
  for (int i = 0; i < 5; ++i)
    CHECK(sample_distortion(pool, rng, false).kind == DistortionKind::identity);

  // Every draw lands inside its template's range; pinned entries are exact.
  std::set<DistortionKind> seen;
  for (int i = 0; i < 500; ++i) {
    DistortionSpec s = sample_distortion(pool, rng, true);
    seen.insert(s.kind);
    const PoolEntry* e = nullptr;
    for (const auto& cand : pool.specs)
      if (cand.kind == s.kind) e = &cand;
    REQUIRE(e != nullptr);
    CHECK(s.param >= e->lo);
    CHECK(s.param <= e->hi);
    if (e->lo == e->hi) CHECK(s.param == e->lo);
  }
  CHECK(seen.size() == 13);  // 500 draws over 13 uniform entries see them all

  // Zero-weight entries are never drawn.
  DistortionPool two;
  two.specs = {{DistortionKind::jpeg, 50, 50, 0, ""},
               {DistortionKind::hflip, 0, 0, 1, ""}};
  for (int i = 0; i < 100; ++i)
    CHECK(sample_distortion(two, rng, true).kind == DistortionKind::hflip);

  // Disabling geometrics removes them from the draw.
  DistortionPool geo = DistortionPool::training_default();
  geo.geometric_enabled = false;
  for (int i = 0; i < 200; ++i)
    CHECK_FALSE(is_geometric(sample_distortion(geo, rng, true).kind));

  // A pool with nothing enabled cannot satisfy a distortion-on phase.
  DistortionPool empty;
  CHECK_THROWS_WITH_AS(sample_distortion(empty, rng, true),
                       "empty distortion pool in a distortion-enabled phase", std::runtime_error);
  DistortionPool only_geo = DistortionPool::eval_geometric();
  only_geo.geometric_enabled = false;
  CHECK_THROWS_AS(sample_distortion(only_geo, rng, true), std::runtime_error);
}

TEST_CASE("published pools carry the protocol parameters") {
  DistortionPool ev = DistortionPool::eval_valuemetric();
  CHECK(ev.specs.size() == 10);
  CHECK_FALSE(ev.geometric_enabled);
  for (const auto& e : ev.specs) CHECK_FALSE(is_geometric(e.kind));
  CHECK(ev.specs[0].kind == DistortionKind::jpeg);
  CHECK(ev.specs[0].lo == 60);
  CHECK(ev.specs[1].lo == 3);    // filter sigma
  CHECK(ev.specs[2].lo == 0.05); // noise sigma
  CHECK(ev.specs[4].lo == 0.05); // salt & pepper ratio

  DistortionPool tr = DistortionPool::training_default();
  CHECK(tr.specs[0].lo == 50);   // harder jpeg for training
  CHECK(tr.specs[2].lo == 0.1);
  CHECK(tr.geometric_enabled);

  DistortionPool eg = DistortionPool::eval_geometric();
  CHECK(eg.specs.size() == 3);
  CHECK(eg.specs[0].kind == DistortionKind::rotation);
  CHECK(eg.specs[0].lo == -30);
  CHECK(eg.specs[0].hi == 30);
  CHECK(eg.specs[1].hi == 0.3);
}

TEST_CASE("same spec and seed replay to identical stochastic outputs") {
  Tensor x = random_image(1, 12, 12, 50);
  DistortionSpec s = spec_of(DistortionKind::gaussian_noise, 0.1);
  Rng ra(77), rb(77);
  Tensor ya = apply_valuemetric(x, s, ra);
  Tensor yb = apply_valuemetric(x, s, rb);
  CHECK(max_abs_diff(ya, yb) == 0);
  Rng rc(78);
  CHECK(max_abs_diff(apply_valuemetric(x, s, rc), ya) > 0);
}

TEST_CASE("plugin registry dispatches, validates, and tags failures") {
  CHECK_FALSE(has_distortion_plugin("halver"));
  register_distortion_plugin("halver",
                             [](const Tensor& t, Rng&) { return affine(t, real(0.5), 0); });
  CHECK(has_distortion_plugin("halver"));

  Rng rng(60);
  Tensor x = random_image(1, 4, 4, 51);
  DistortionSpec s;
  s.kind = DistortionKind::plugin;
  s.plugin_name = "halver";
  Tensor y = apply_valuemetric(x, s, rng);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(x.data()[i] * real(0.5)));

  CHECK_THROWS_AS(apply_distortion_plugin("no_such_plugin", x, rng), std::runtime_error);

  register_distortion_plugin("broken", [](const Tensor&, Rng&) -> Tensor {
    throw std::runtime_error("backend unreachable");
  });
  try {
    apply_distortion_plugin("broken", x, rng);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("distortion plugin 'broken' failed:") != std::string::npos);
    CHECK(std::string(e.what()).find("backend unreachable") != std::string::npos);
  }

  register_distortion_plugin("bad_shape",
                             [](const Tensor&, Rng&) { return Tensor::zeros({1, 3, 2, 2}); });
  Tensor big = random_image(1, 8, 8, 52);
  CHECK_THROWS_AS(apply_distortion_plugin("bad_shape", big, rng), std::runtime_error);

  CHECK_THROWS_AS(register_distortion_plugin("", nullptr), std::invalid_argument);
}
