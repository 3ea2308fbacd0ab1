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

#include "maskmark/message.hpp"

#include "maskmark/common.hpp"

namespace maskmark {

std::vector<uint8_t> sample_message(int l, Rng& rng) {
  check_arg(l >= 1, "message length must be positive");
  std::vector<uint8_t> bits(static_cast<size_t>(l));
  for (auto& b : bits) b = rng.bernoulli(0.5) ? 1 : 0;
  return bits;
}

std::vector<uint8_t> bits_from_logits(const Tensor& logits, real threshold) {
  const auto& s = logits.shape();
  check(s.size() == 2, "bits_from_logits expects [N,l]");
  const real* d = logits.data();
  std::vector<uint8_t> bits(logits.numel());
  for (size_t i = 0; i < bits.size(); ++i) bits[i] = d[i] > threshold ? 1 : 0;
  return bits;
}

double bit_accuracy(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  check(a.size() == b.size() && !a.empty(), "bit_accuracy: length mismatch");
  size_t same = 0;
  for (size_t i = 0; i < a.size(); ++i)
    if ((a[i] != 0) == (b[i] != 0)) ++same;
  return double(same) / double(a.size());
}

Tensor messages_to_tensor(const std::vector<uint8_t>& bits, int n, int l) {
  check(bits.size() == size_t(n) * size_t(l), "messages_to_tensor: size mismatch");
  Tensor t = Tensor::zeros({n, l});
  real* d = t.data();
  for (size_t i = 0; i < bits.size(); ++i) d[i] = bits[i] ? real(1) : real(0);
  return t;
}

std::vector<uint8_t> parse_hex_message(const std::string& hex, int l) {
  check_arg(int(hex.size()) * 4 == l, "message length mismatch");
  std::vector<uint8_t> bits;
  bits.reserve(size_t(l));
  for (char c : hex) {
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw std::invalid_argument("message length mismatch: non-hex character");
    for (int b = 3; b >= 0; --b) bits.push_back(uint8_t((v >> b) & 1));
  }
  return bits;
}

std::string bits_to_hex(const std::vector<uint8_t>& bits) {
  check(bits.size() % 4 == 0, "bits_to_hex: length must be a multiple of 4");
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bits.size() / 4);
  for (size_t i = 0; i < bits.size(); i += 4) {
    int v = 0;
    for (int b = 0; b < 4; ++b) v = (v << 1) | (bits[i + size_t(b)] ? 1 : 0);
    out.push_back(digits[v]);
  }
  return out;
}

}  // namespace maskmark
