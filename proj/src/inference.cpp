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

#include "maskmark/inference.hpp"

#include <string>

#include "maskmark/common.hpp"
#include "maskmark/jnd.hpp"
#include "maskmark/message.hpp"
#include "maskmark/ops.hpp"
#include "maskmark/trainer.hpp"

namespace maskmark {

namespace {

void check_image(const Tensor& image, const char* who) {
  check_arg(image.defined() && image.shape().size() == 4 && image.shape()[0] == 1 &&
                image.shape()[1] == 3,
            std::string(who) + " expects a single [1,3,H,W] image");
}

Tensor bits_tensor(const ModelBundle& model, const std::vector<uint8_t>& bits) {
  check_arg(int(bits.size()) == model.cfg.l,
            "message length mismatch: model carries " + std::to_string(model.cfg.l) +
                " bits, got " + std::to_string(bits.size()));
  return messages_to_tensor(bits, 1, model.cfg.l);
}

// Encode + JND modulation at the model's native resolution. mask must be a
// defined [1,1,s,s] tensor iff the model is ED.
Tensor embed_at_native(const ModelBundle& model, const Tensor& img, const Tensor& bits,
                       const Tensor& mask, double mu) {
  check_arg(mu >= 0, "mu must be non-negative");
  Tensor enc = model.encode(img, bits, mask);
  return apply_jnd_modulation(img, enc, real(mu));
}

Tensor full_mask_tensor(const ModelBundle& model) {
  const int s = model.cfg.image_size;
  return mask_to_tensor(gen_full_mask(s, s));
}

bool at_native(const ModelBundle& model, const Tensor& image) {
  return image.shape()[2] == model.cfg.image_size && image.shape()[3] == model.cfg.image_size;
}

// Mask resampled to the model resolution: bilinear on the soft field, then
// re-binarized so the encoder still sees a {0,1} channel.
Mask mask_at_native(const ModelBundle& model, const Mask& m) {
  const int s = model.cfg.image_size;
  if (m.h == s && m.w == s) return m;
  return binarize_mask(mask_from_tensor(resize_bilinear(mask_to_tensor(m), s, s)));
}

}  // namespace

Tensor embed_global(const ModelBundle& model, const Tensor& image,
                    const std::vector<uint8_t>& bits, std::optional<double> mu) {
  NoGradGuard ng;
  check_image(image, "embed_global");
  if (!at_native(model, image)) return embed_arbitrary_resolution(model, image, bits, mu);
  Tensor b = bits_tensor(model, bits);
  Tensor mask = model.cfg.is_ed() ? full_mask_tensor(model) : Tensor();
  return embed_at_native(model, image, b, mask, mu.value_or(model.cfg.default_mu()));
}

Tensor embed_local(const ModelBundle& model, const Tensor& image,
                   const std::vector<uint8_t>& bits, const Mask& m,
                   std::optional<double> mu) {
  NoGradGuard ng;
  check_image(image, "embed_local");
  check_arg(model.cfg.is_ed(), "embed_local requires an ED model");
  check_arg(m.h == int(image.shape()[2]) && m.w == int(image.shape()[3]),
            "embed_local: mask size does not match the image");
  check_arg(m.is_binary(), "embed_local requires a binary mask");
  Tensor b = bits_tensor(model, bits);
  const double strength = mu.value_or(model.cfg.default_mu());
  Tensor full_res_mask = mask_to_tensor(m);

  if (at_native(model, image)) {
    Tensor wm = embed_at_native(model, image, b, full_res_mask, strength);
    // Blend: unmasked pixels are the untouched originals, bit for bit.
    return fuse(wm, image, full_res_mask);
  }

  // Off-native: embed on the resized image, carry the residual back up, and
  // blend at full resolution so the bit-exact guarantee survives the resize.
  const int s = model.cfg.image_size;
  Tensor xbar = resize_bilinear(image, s, s);
  Tensor native_mask = mask_to_tensor(mask_at_native(model, m));
  Tensor wm = embed_at_native(model, xbar, b, native_mask, strength);
  Tensor r = resize_bilinear(sub(wm, xbar), int(image.shape()[2]), int(image.shape()[3]));
  return fuse(clamp(add(image, r), real(-1), real(1)), image, full_res_mask);
}

Tensor embed_arbitrary_resolution(const ModelBundle& model, const Tensor& image,
                                  const std::vector<uint8_t>& bits,
                                  std::optional<double> mu) {
  NoGradGuard ng;
  check_image(image, "embed_arbitrary_resolution");
  Tensor b = bits_tensor(model, bits);
  Tensor mask = model.cfg.is_ed() ? full_mask_tensor(model) : Tensor();
  const double strength = mu.value_or(model.cfg.default_mu());
  // Degenerate resize is the identity, so the residual round trip reduces to
  // the native embedding itself; returning it directly keeps the two paths
  // bit-identical.
  if (at_native(model, image)) return embed_at_native(model, image, b, mask, strength);

  const int s = model.cfg.image_size;
  const int h = int(image.shape()[2]), w = int(image.shape()[3]);
  Tensor xbar = resize_bilinear(image, s, s);
  Tensor r = sub(embed_at_native(model, xbar, b, mask, strength), xbar);
  return clamp(add(image, resize_bilinear(r, h, w)), real(-1), real(1));
}

namespace {

// Shared front half of the two decoders: bring the image to the model
// resolution, predict and binarize the mask, refuse an empty detection.
struct Located {
  Tensor native_image;
  Mask soft;
  ExtractionResult result;
};

Located locate(const ModelBundle& model, const Tensor& image, real threshold) {
  check_image(image, "locate_and_extract");
  check_arg(threshold > 0 && threshold < 1, "mask threshold out of (0,1)");
  Located out;
  out.result.resized = !at_native(model, image);
  const int s = model.cfg.image_size;
  out.native_image = out.result.resized ? resize_bilinear(image, s, s) : image;
  out.soft = mask_from_tensor(model.predict_mask(out.native_image));
  out.result.mask = binarize_mask(out.soft, threshold);

  double sum = 0;
  int64_t area = 0;
  for (size_t i = 0; i < out.result.mask.data.size(); ++i) {
    if (out.result.mask.data[i] == real(1)) {
      sum += double(out.soft.data[i]);
      ++area;
    }
  }
  check(area > 0, "no watermark region detected");
  out.result.mean_mask_confidence = sum / double(area);
  return out;
}

std::vector<uint8_t> read_region(const ModelBundle& model, const Tensor& native_image,
                                 const Mask& region) {
  Tensor isolated = isolate(native_image, mask_to_tensor(region));
  return bits_from_logits(model.extract_bits(isolated));
}

}  // namespace

ExtractionResult locate_and_extract(const ModelBundle& model, const Tensor& image,
                                    real threshold) {
  NoGradGuard ng;
  Located loc = locate(model, image, threshold);
  loc.result.message = read_region(model, loc.native_image, loc.result.mask);
  return loc.result;
}

ExtractionResult extract_multi(const ModelBundle& model, const Tensor& image,
                               real threshold, double min_area_frac) {
  NoGradGuard ng;
  Located loc = locate(model, image, threshold);
  loc.result.message = read_region(model, loc.native_image, loc.result.mask);
  for (const Mask& region : connected_components(loc.result.mask, min_area_frac)) {
    loc.result.per_region.emplace_back(region, read_region(model, loc.native_image, region));
  }
  return loc.result;
}

}  // namespace maskmark
