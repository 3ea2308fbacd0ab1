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

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "maskmark/rng.hpp"
#include "maskmark/tensor.hpp"

namespace maskmark {

enum class DistortionKind {
  identity,
  jpeg,             // param = quality
  gaussian_filter,  // param = sigma
  gaussian_noise,   // param = stddev in [-1,1] units
  median_filter,    // param = kernel size (odd)
  salt_pepper,      // param = flip ratio
  resize,           // param = scale factor
  brightness,       // param = factor
  contrast,         // param = factor
  saturation,       // param = factor
  hue,              // param = shift as fraction of the hue circle
  rotation,         // param = angle in degrees
  perspective,      // param = corner displacement scale
  hflip,
  plugin,           // param unused; plugin_name selects the callable
};

const char* distortion_kind_name(DistortionKind k);
DistortionKind distortion_kind_from_name(const std::string& name);
bool is_geometric(DistortionKind k);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::identity;
  double param = 0.0;
  uint64_t seed = 0;  // recorded at sample time so a draw can be replayed
  std::string plugin_name;
};

// Range template; lo == hi pins the parameter.
struct PoolEntry {
  DistortionKind kind = DistortionKind::identity;
  double lo = 0.0;
  double hi = 0.0;
  double weight = 1.0;
  std::string plugin_name;
};

struct DistortionPool {
  std::vector<PoolEntry> specs;
  bool geometric_enabled = true;

  // Pools mirroring the published robustness protocol: harder parameters for
  // training, milder ones for evaluation.
  static DistortionPool training_default();
  static DistortionPool eval_valuemetric();
  static DistortionPool eval_geometric();
};

// Draws one concrete spec. Returns identity when the phase has distortions
// off; throws on an empty (or fully disabled) pool otherwise.
DistortionSpec sample_distortion(const DistortionPool& pool, Rng& rng, bool distortions_on);

// Valuemetric distortions keep the spatial layout; gradients flow through
// exactly where the op is differentiable and straight-through elsewhere.
Tensor apply_valuemetric(const Tensor& img, const DistortionSpec& spec, Rng& rng);

// Geometric distortions move pixels; the mask rides along with the same
// transform (nearest-neighbor, stays binary, out-of-frame = 0).
std::pair<Tensor, Tensor> apply_geometric(const Tensor& img, const Tensor& mask,
                                          const DistortionSpec& spec, Rng& rng);

// JPEG round-trip forward, identity backward.
Tensor differentiable_jpeg(const Tensor& img, int quality);

// User-registered image→image callables (e.g. an external regeneration model
// for fine-tuning). Failures are rethrown tagged with the plugin name.
using DistortionPlugin = std::function<Tensor(const Tensor&, Rng&)>;
void register_distortion_plugin(const std::string& name, DistortionPlugin fn);
bool has_distortion_plugin(const std::string& name);
Tensor apply_distortion_plugin(const std::string& name, const Tensor& img, Rng& rng);

}  // namespace maskmark
