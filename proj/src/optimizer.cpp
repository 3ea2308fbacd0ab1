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

#include "maskmark/optimizer.hpp"

#include <cmath>

#include "maskmark/common.hpp"

namespace maskmark {

AdamW::AdamW(ParamList params, double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  check_arg(lr > 0, "optimizer lr must be > 0");
  check_arg(weight_decay >= 0, "weight_decay must be >= 0");
  check_arg(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must be in [0,1)");
  check_arg(eps > 0, "eps must be > 0");
  check_arg(!params_.empty(), "optimizer needs at least one parameter");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    (void)name;
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    const real* g = p.grad_data();
    if (g == nullptr) continue;
    real* w = p.data();
    real* m = m_[i].data();
    real* v = v_[i].data();
    const int64_t n = p.numel();
    for (int64_t k = 0; k < n; ++k) {
      const double gk = double(g[k]);
      const double mk = beta1_ * double(m[k]) + (1.0 - beta1_) * gk;
      const double vk = beta2_ * double(v[k]) + (1.0 - beta2_) * gk * gk;
      m[k] = real(mk);
      v[k] = real(vk);
      const double update = (mk / bc1) / (std::sqrt(vk / bc2) + eps_);
      // Decay multiplies the weight directly, not the adaptive step.
      w[k] = real(double(w[k]) - lr_ * (update + weight_decay_ * double(w[k])));
    }
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) {
    (void)name;
    p.zero_grad();
  }
}

ParamList AdamW::moments_m() const {
  ParamList out;
  for (size_t i = 0; i < params_.size(); ++i) out.emplace_back(params_[i].first, m_[i]);
  return out;
}

ParamList AdamW::moments_v() const {
  ParamList out;
  for (size_t i = 0; i < params_.size(); ++i) out.emplace_back(params_[i].first, v_[i]);
  return out;
}

void AdamW::load_state(const ParamList& m, const ParamList& v, int64_t t) {
  check(m.size() == params_.size() && v.size() == params_.size(),
        "optimizer state size mismatch");
  check(t >= 0, "optimizer step count must be >= 0");
  for (size_t i = 0; i < params_.size(); ++i) {
    check(m[i].first == params_[i].first && v[i].first == params_[i].first,
          "optimizer state name mismatch: " + params_[i].first);
    check(m[i].second.shape() == params_[i].second.shape() &&
              v[i].second.shape() == params_[i].second.shape(),
          "optimizer state shape mismatch: " + params_[i].first);
    m_[i].vec() = m[i].second.vec();
    v_[i].vec() = v[i].second.vec();
  }
  t_ = t;
}

double lr_schedule(int64_t step, int64_t total_steps, int64_t warmup_steps, double base_lr) {
  check_arg(total_steps >= 1 && warmup_steps >= 1 && warmup_steps < total_steps,
            "lr_schedule needs 0 < warmup_steps < total_steps");
  check_arg(step >= 0 && step <= total_steps, "lr_schedule step out of range");
  if (step < warmup_steps) return base_lr * double(step + 1) / double(warmup_steps);
  const double progress = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

}  // namespace maskmark
