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
#include <string>
#include <vector>

#include "maskmark/rng.hpp"
#include "maskmark/tensor.hpp"

namespace maskmark {

// Uniform random payload of l bits, each 0 or 1.
std::vector<uint8_t> sample_message(int l, Rng& rng);

// Thresholds logits strictly above `threshold` to 1. Input [N,l]; output is
// row-major N·l bits.
std::vector<uint8_t> bits_from_logits(const Tensor& logits, real threshold = real(0.5));

// Fraction of positions where the two bit strings agree.
double bit_accuracy(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

// [N,l] tensor with values {0,1} from row-major bits.
Tensor messages_to_tensor(const std::vector<uint8_t>& bits, int n, int l);

// Hex payload IO, most significant nibble first: "a3" → 1,0,1,0,0,0,1,1.
// Throws invalid_argument("message length mismatch") when 4·digits ≠ l and
// on non-hex characters.
std::vector<uint8_t> parse_hex_message(const std::string& hex, int l);
std::string bits_to_hex(const std::vector<uint8_t>& bits);  // size must be a multiple of 4

}  // namespace maskmark
