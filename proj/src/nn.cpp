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

#include "maskmark/nn.hpp"

#include <algorithm>
#include <cmath>

namespace maskmark {

int norm_groups(int c) {
  int g = 8;
  while (g > 1 && c % g != 0) g /= 2;
  return g;
}

Conv2dLayer::Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng) {
  const double std = std::sqrt(2.0 / (double(cin) * k * k));
  w = Tensor::randn({cout, cin, k, k}, rng, std, true);
  b = Tensor::zeros({cout}, true);
  stride = stride_;
  pad = pad_;
}

void Conv2dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

LinearLayer::LinearLayer(int fin, int fout, Rng& rng) {
  const double std = std::sqrt(2.0 / double(fin));
  w = Tensor::randn({fout, fin}, rng, std, true);
  b = Tensor::zeros({fout}, true);
}

void LinearLayer::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

GroupNormLayer::GroupNormLayer(int c) {
  gamma = Tensor::full({c}, 1, true);
  beta = Tensor::zeros({c}, true);
  groups = norm_groups(c);
}

void GroupNormLayer::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

CNRBlock::CNRBlock(int cin, int cout, Rng& rng, int stride, int k)
    : conv(cin, cout, k, stride, k / 2, rng), norm(cout) {}

void CNRBlock::collect(const std::string& prefix, ParamList& out) const {
  conv.collect(prefix + ".conv", out);
  norm.collect(prefix + ".norm", out);
}

namespace {
int level_ch(int base, int i) { return base * std::min(1 << i, 4); }
}  // namespace

UNet::UNet(int cin, int base, int depth_, Rng& rng) : depth(depth_) {
  check_arg(depth >= 1, "unet: depth must be >= 1");
  stem = CNRBlock(cin, base, rng);
  for (int i = 1; i <= depth; ++i)
    down.emplace_back(level_ch(base, i - 1), level_ch(base, i), rng, /*stride=*/2);
  for (int i = depth; i >= 1; --i) {
    // after upsampling level i and concatenating the level i-1 skip
    dec.emplace_back(level_ch(base, i) + level_ch(base, i - 1), level_ch(base, i - 1), rng);
  }
}

Tensor UNet::operator()(const Tensor& x) const {
  check(x.dim(2) % (1 << depth) == 0 && x.dim(3) % (1 << depth) == 0,
        "unet: spatial dims must be divisible by " + std::to_string(1 << depth));
  std::vector<Tensor> skips;
  Tensor h = stem(x);
  for (int i = 0; i < depth; ++i) {
    skips.push_back(h);
    h = down[size_t(i)](h);
  }
  for (int i = 0; i < depth; ++i) {
    Tensor up = upsample_nearest2(h);
    h = dec[size_t(i)](concat_channels({up, skips[size_t(depth - 1 - i)]}));
  }
  return h;
}

void UNet::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out);
  for (size_t i = 0; i < down.size(); ++i)
    down[i].collect(prefix + ".down" + std::to_string(i), out);
  for (size_t i = 0; i < dec.size(); ++i)
    dec[i].collect(prefix + ".dec" + std::to_string(i), out);
}

MiniU::MiniU(int cin, int mid, int cout, Rng& rng)
    : in(cin, cout, rng),
      d0(cout, mid, rng),
      d1(mid, mid, rng, /*stride=*/2),
      u0(2 * mid, mid, rng),
      out(mid, cout, 3, 1, 1, rng) {}

Tensor MiniU::operator()(const Tensor& x) const {
  Tensor h = in(x);
  Tensor a = d0(h);
  Tensor b = d1(a);
  Tensor u = u0(concat_channels({upsample_nearest2(b), a}));
  return add(h, out(u));
}

void MiniU::collect(const std::string& prefix, ParamList& out_) const {
  in.collect(prefix + ".in", out_);
  d0.collect(prefix + ".d0", out_);
  d1.collect(prefix + ".d1", out_);
  u0.collect(prefix + ".u0", out_);
  out.collect(prefix + ".out", out_);
}

}  // namespace maskmark
