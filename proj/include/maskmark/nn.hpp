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

#include <string>
#include <utility>
#include <vector>

#include "maskmark/ops.hpp"

namespace maskmark {

// Named parameter handles in a stable, code-defined order. Serialization and
// the optimizer both iterate this order, so it must not depend on runtime
// state.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

// Largest power-of-two divisor of c, capped at 8.
int norm_groups(int c);

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LinearLayer {
  Tensor w, b;

  LinearLayer() = default;
  LinearLayer(int fin, int fout, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct GroupNormLayer {
  Tensor gamma, beta;
  int groups = 1;

  GroupNormLayer() = default;
  explicit GroupNormLayer(int c);
  Tensor operator()(const Tensor& x) const { return group_norm(x, gamma, beta, groups); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Conv-Norm-ReLU block, the unit all networks here are assembled from.
struct CNRBlock {
  Conv2dLayer conv;
  GroupNormLayer norm;

  CNRBlock() = default;
  CNRBlock(int cin, int cout, Rng& rng, int stride = 1, int k = 3);
  Tensor operator()(const Tensor& x) const { return relu(norm(conv(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Plain U-Net trunk: stride-2 downsampling, nearest-neighbor upsampling,
// skip connections by channel concatenation. Output is a base-width feature
// map at input resolution; task heads are attached by the owner.
// Channel plan: level i runs at base * min(2^i, 4) channels.
struct UNet {
  CNRBlock stem;
  std::vector<CNRBlock> down;  // stride-2 blocks, one per level
  std::vector<CNRBlock> dec;   // post-concat blocks, one per level
  int depth = 0;

  UNet() = default;
  UNet(int cin, int base, int depth, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Residual block with a small U inside: the stage shape used by the
// localization network (a U of these is a nested U).
struct MiniU {
  CNRBlock in;    // cin -> cout
  CNRBlock d0;    // cout -> mid, full res
  CNRBlock d1;    // mid -> mid, stride 2
  CNRBlock u0;    // 2*mid -> mid after upsample+concat
  Conv2dLayer out;  // mid -> cout, added to the residual path

  MiniU() = default;
  MiniU(int cin, int mid, int cout, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace maskmark
