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
#include <vector>

#include "maskmark/nn.hpp"

namespace maskmark {

// Adaptive-moment optimizer with decoupled weight decay. Holds live handles
// to the parameters it updates; moments are exposed by name so checkpoints
// can restore them bit-exact.
class AdamW {
 public:
  explicit AdamW(ParamList params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8);

  // One update from the gradients currently on the parameters. Parameters
  // whose grad was never touched this step are left alone entirely.
  void step();
  void zero_grad();

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t t() const { return t_; }

  ParamList moments_m() const;
  ParamList moments_v() const;
  // Restores moments and step count; names and shapes must match exactly.
  void load_state(const ParamList& m, const ParamList& v, int64_t t);

 private:
  ParamList params_;
  std::vector<Tensor> m_, v_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
// at total_steps. Defined on 0 <= step <= total_steps.
double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps, double base_lr);

}  // namespace maskmark
