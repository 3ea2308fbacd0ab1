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

#include "maskmark/nn.hpp"

namespace maskmark {

// Everything needed to rebuild a model skeleton. Serialized into checkpoints;
// the digest of the canonical form guards against loading weights into an
// incompatible configuration.
struct ModelConfig {
  std::string variant = "D";  // "D": global embed; "ED": mask-conditioned embed
  int l = 32;                 // payload bits
  int c_f = 16;               // message feature channels
  int image_size = 256;       // native training resolution
  int enc_base = 16;
  int enc_depth = 3;
  int loc_base = 12;
  int ext_base = 16;
  int ext_depth = 3;
  int codec_blocks = 3;  // CNR blocks on each codec side

  bool is_ed() const { return variant == "ED"; }
  std::string canonical() const;
  uint64_t digest() const;
  void validate() const;
  // Inference-time modulation strength when the caller does not override it.
  double default_mu() const { return is_ed() ? 1.75 : 1.3; }
};

// Message <-> spatial feature codec. The expansion side feeds the encoder;
// the head side terminates the extractor.
struct MessageCodec {
  int l = 0, c_f = 0;
  LinearLayer expand;              // l -> l*l
  std::vector<CNRBlock> to_feat;   // 1 -> c_f -> ... -> c_f
  std::vector<CNRBlock> from_feat; // c_f -> ... -> 1
  LinearLayer head1;               // l*l -> l*l
  LinearLayer head2;               // l*l -> l

  MessageCodec() = default;
  MessageCodec(int l, int c_f, int blocks, Rng& rng);
  // bits: [N,l] with values {0,1} -> [N,c_f,H,W]
  Tensor message_to_feature(const Tensor& bits, int h, int w) const;
  // feature: [N,c_f,H,W] -> logits [N,l]
  Tensor feature_to_logits(const Tensor& feature) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// U-Net encoder producing the intermediate encoded image as a residual on
// top of the input image.
struct Encoder {
  bool ed = false;
  UNet unet;
  Conv2dLayer head;  // base -> 3

  Encoder() = default;
  Encoder(bool ed, int c_f, int base, int depth, Rng& rng);
  // img [N,3,H,W]; feat [N,c_f,H,W]; mask [N,1,H,W] iff ED mode
  Tensor operator()(const Tensor& img, const Tensor& feat, const Tensor& mask) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Mask prediction head: a small U of residual mini-U stages, sigmoid output.
struct LocalizationNet {
  CNRBlock stem;     // 3 -> b
  MiniU m1;          // b, full res
  CNRBlock down1;    // b -> 2b, stride 2
  MiniU m2;          // 2b
  CNRBlock down2;    // 2b -> 4b, stride 2
  MiniU bottom;      // 4b
  CNRBlock u2;       // 4b+2b -> 2b
  CNRBlock u1;       // 2b+b -> b
  Conv2dLayer head;  // b -> 1

  LocalizationNet() = default;
  LocalizationNet(int base, Rng& rng);
  Tensor operator()(const Tensor& img) const;  // [N,1,H,W] in [0,1]
  void collect(const std::string& prefix, ParamList& out) const;
};

// Bit extraction trunk: U-Net over the isolated image, projected to c_f
// channels; the codec head turns the feature into logits.
struct ExtractorNet {
  UNet unet;
  Conv2dLayer to_cf;  // base -> c_f

  ExtractorNet() = default;
  ExtractorNet(int c_f, int base, int depth, Rng& rng);
  Tensor operator()(const Tensor& masked_img) const;  // [N,c_f,H,W]
  void collect(const std::string& prefix, ParamList& out) const;
};

// The full trainable system.
struct ModelBundle {
  ModelConfig cfg;
  MessageCodec codec;
  Encoder encoder;
  LocalizationNet loc;
  ExtractorNet ext;

  // bits [N,l] -> encoded image [N,3,H,W]; mask must be defined iff ED
  Tensor encode(const Tensor& img, const Tensor& bits, const Tensor& mask) const;
  Tensor predict_mask(const Tensor& img) const { return loc(img); }
  Tensor extract_bits(const Tensor& masked_img) const {
    return codec.feature_to_logits(ext(masked_img));
  }
  ParamList params() const;
  int64_t param_count() const;
};

ModelBundle build_model(const ModelConfig& cfg, uint64_t seed);

}  // namespace maskmark
