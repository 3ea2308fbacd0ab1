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
#include <memory>
#include <string>
#include <vector>

#include "maskmark/common.hpp"
#include "maskmark/rng.hpp"

namespace maskmark {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the dynamically built computation graph. Children hold
// shared_ptrs to parents, so releasing the loss tensor frees the whole
// per-step graph while parameters (held by their modules) survive.
struct TensorNode {
  std::vector<int> shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void()> backward_fn;
  std::string name;  // set for parameters only

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), real(0));
  }
};

// Global autograd switch. Inference paths run under NoGradGuard so no graph
// is retained.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// Value-semantic handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> data, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi,
                             bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[i]; }
  int ndim() const { return int(n_->shape.size()); }
  int64_t numel() const { return n_->numel(); }

  real* data() { return n_->value.data(); }
  const real* data() const { return n_->value.data(); }
  std::vector<real>& vec() { return n_->value; }
  const std::vector<real>& vec() const { return n_->value; }

  real item() const;

  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  const std::string& name() const { return n_->name; }
  void set_name(std::string name) { n_->name = std::move(name); }

  real* grad_data() { return n_->grad.empty() ? nullptr : n_->grad.data(); }
  std::vector<real>& grad_vec() { return n_->grad; }
  void ensure_grad() { n_->ensure_grad(); }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), real(0));
  }

  // Copies the value into a fresh leaf with no history.
  Tensor detach() const;

  // Reverse-mode sweep from a scalar node.
  void backward();

  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

std::string shape_str(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace maskmark
