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

#include "maskmark/models.hpp"

#include <sstream>

namespace maskmark {

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "variant=" << variant << ";l=" << l << ";c_f=" << c_f << ";image_size=" << image_size
     << ";enc_base=" << enc_base << ";enc_depth=" << enc_depth << ";loc_base=" << loc_base
     << ";ext_base=" << ext_base << ";ext_depth=" << ext_depth
     << ";codec_blocks=" << codec_blocks;
  return os.str();
}

uint64_t ModelConfig::digest() const { return fnv1a64(canonical()); }

void ModelConfig::validate() const {
  check_arg(variant == "D" || variant == "ED", "variant must be D or ED");
  check_arg(l >= 1, "l must be >= 1");
  check_arg(c_f >= 1, "c_f must be >= 1");
  check_arg(enc_base >= 1 && loc_base >= 1 && ext_base >= 1, "base widths must be >= 1");
  check_arg(enc_depth >= 1 && ext_depth >= 1, "depths must be >= 1");
  check_arg(codec_blocks >= 1, "codec_blocks must be >= 1");
  const int div = std::max({1 << enc_depth, 1 << ext_depth, 8});
  check_arg(image_size >= div && image_size % div == 0,
            "image_size must be a positive multiple of " + std::to_string(div));
  check_arg(image_size >= l, "image_size must be >= l");
}

// ---- MessageCodec ----------------------------------------------------------

MessageCodec::MessageCodec(int l_, int c_f_, int blocks, Rng& rng)
    : l(l_), c_f(c_f_), expand(l_, l_ * l_, rng) {
  int ch = 1;
  for (int i = 0; i < blocks; ++i) {
    to_feat.emplace_back(ch, c_f, rng);
    ch = c_f;
  }
  for (int i = 0; i < blocks; ++i) {
    // every block before the last keeps c_f channels, the last reduces to 1
    const int out = (i + 1 == blocks) ? 1 : c_f;
    from_feat.emplace_back(c_f, out, rng);
  }
  head1 = LinearLayer(l * l, l * l, rng);
  head2 = LinearLayer(l * l, l, rng);
}

Tensor MessageCodec::message_to_feature(const Tensor& bits, int h, int w) const {
  check(bits.ndim() == 2 && bits.dim(1) == l,
        "message_to_feature: expected [N," + std::to_string(l) + "] bits");
  const int n = bits.dim(0);
  Tensor x = expand(bits);                    // [N, l*l]
  x = reshape(x, {n, 1, l, l});
  x = resize_bilinear(x, h, w);               // [N,1,H,W]
  for (const auto& blk : to_feat) x = blk(x);
  return x;                                   // [N,c_f,H,W]
}

Tensor MessageCodec::feature_to_logits(const Tensor& feature) const {
  check(feature.ndim() == 4 && feature.dim(1) == c_f,
        "feature_to_logits: expected " + std::to_string(c_f) + " channels, got " +
            shape_str(feature.shape()));
  const int n = feature.dim(0);
  Tensor x = feature;
  for (const auto& blk : from_feat) x = blk(x);  // [N,1,H,W]
  x = resize_bilinear(x, l, l);
  x = reshape(x, {n, l * l});
  x = relu(head1(x));
  return head2(x);  // [N,l]
}

void MessageCodec::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  for (size_t i = 0; i < to_feat.size(); ++i)
    to_feat[i].collect(prefix + ".to_feat" + std::to_string(i), out);
  for (size_t i = 0; i < from_feat.size(); ++i)
    from_feat[i].collect(prefix + ".from_feat" + std::to_string(i), out);
  head1.collect(prefix + ".head1", out);
  head2.collect(prefix + ".head2", out);
}

// ---- Encoder ----------------------------------------------------------------

Encoder::Encoder(bool ed_, int c_f, int base, int depth, Rng& rng)
    : ed(ed_), unet(3 + c_f + (ed_ ? 1 : 0), base, depth, rng), head(base, 3, 3, 1, 1, rng) {}

Tensor Encoder::operator()(const Tensor& img, const Tensor& feat, const Tensor& mask) const {
  if (!ed) check(!mask.defined(), "mask not accepted in D mode");
  if (ed) check(mask.defined(), "mask required in ED mode");
  std::vector<Tensor> parts = {img, feat};
  if (ed) parts.push_back(mask);
  Tensor h = unet(concat_channels(parts));
  // residual head: the encoded image starts at the input image
  return add(img, head(h));
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  unet.collect(prefix + ".unet", out);
  head.collect(prefix + ".head", out);
}

// ---- LocalizationNet ---------------------------------------------------------

LocalizationNet::LocalizationNet(int base, Rng& rng)
    : stem(3, base, rng),
      m1(base, base, base, rng),
      down1(base, 2 * base, rng, /*stride=*/2),
      m2(2 * base, base, 2 * base, rng),
      down2(2 * base, 4 * base, rng, /*stride=*/2),
      bottom(4 * base, 2 * base, 4 * base, rng),
      u2(4 * base + 2 * base, 2 * base, rng),
      u1(2 * base + base, base, rng),
      head(base, 1, 3, 1, 1, rng) {}

Tensor LocalizationNet::operator()(const Tensor& img) const {
  Tensor s = stem(img);
  Tensor e1 = m1(s);
  Tensor e2 = m2(down1(e1));
  Tensor b = bottom(down2(e2));
  Tensor h = u2(concat_channels({upsample_nearest2(b), e2}));
  h = u1(concat_channels({upsample_nearest2(h), e1}));
  return sigmoid(head(h));
}

void LocalizationNet::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out);
  m1.collect(prefix + ".m1", out);
  down1.collect(prefix + ".down1", out);
  m2.collect(prefix + ".m2", out);
  down2.collect(prefix + ".down2", out);
  bottom.collect(prefix + ".bottom", out);
  u2.collect(prefix + ".u2", out);
  u1.collect(prefix + ".u1", out);
  head.collect(prefix + ".head", out);
}

// ---- ExtractorNet ------------------------------------------------------------

ExtractorNet::ExtractorNet(int c_f, int base, int depth, Rng& rng)
    : unet(3, base, depth, rng), to_cf(base, c_f, 3, 1, 1, rng) {}

Tensor ExtractorNet::operator()(const Tensor& masked_img) const {
  return to_cf(unet(masked_img));
}

void ExtractorNet::collect(const std::string& prefix, ParamList& out) const {
  unet.collect(prefix + ".unet", out);
  to_cf.collect(prefix + ".to_cf", out);
}

// ---- ModelBundle -------------------------------------------------------------

Tensor ModelBundle::encode(const Tensor& img, const Tensor& bits, const Tensor& mask) const {
  Tensor feat = codec.message_to_feature(bits, img.dim(2), img.dim(3));
  return encoder(img, feat, mask);
}

ParamList ModelBundle::params() const {
  ParamList out;
  codec.collect("codec", out);
  encoder.collect("encoder", out);
  loc.collect("loc", out);
  ext.collect("ext", out);
  return out;
}

int64_t ModelBundle::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params()) n += t.numel();
  return n;
}

ModelBundle build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelBundle m;
  m.cfg = cfg;
  m.codec = MessageCodec(cfg.l, cfg.c_f, cfg.codec_blocks, rng);
  m.encoder = Encoder(cfg.is_ed(), cfg.c_f, cfg.enc_base, cfg.enc_depth, rng);
  m.loc = LocalizationNet(cfg.loc_base, rng);
  m.ext = ExtractorNet(cfg.c_f, cfg.ext_base, cfg.ext_depth, rng);
  return m;
}

}  // namespace maskmark
