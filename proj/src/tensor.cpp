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

#include "maskmark/tensor.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

namespace maskmark {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

std::string to_hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

static NodePtr alloc_node(std::vector<int> shape) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(size_t(n->numel()), real(0));
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(std::vector<int> shape, real v, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> data, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  check(int64_t(data.size()) == n->numel(),
        "tensor data size " + std::to_string(data.size()) + " does not match shape " +
            shape_str(n->shape));
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  for (auto& v : n->value) v = real(rng.normal() * stddev);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi,
                            bool requires_grad) {
  auto n = alloc_node(std::move(shape));
  for (auto& v : n->value) v = real(rng.uniform(lo, hi));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

real Tensor::item() const {
  check(numel() == 1, "item() requires a scalar tensor, got " + shape_str(shape()));
  return n_->value[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = n_->shape;
  n->value = n_->value;
  n->requires_grad = false;
  return Tensor(n);
}

void Tensor::backward() {
  check(defined() && numel() == 1, "backward() requires a defined scalar tensor");
  check(n_->requires_grad, "backward() on a tensor that does not require grad");

  // Reverse postorder over child->parent edges is a topological order: every
  // node's backward_fn runs only after all of its consumers have accumulated
  // into its grad.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({n_.get(), 0});
  seen.insert(n_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  n_->ensure_grad();
  n_->grad[0] = real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn();
  }
}

}  // namespace maskmark
