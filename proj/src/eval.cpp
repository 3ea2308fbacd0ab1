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

#include "maskmark/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "maskmark/common.hpp"
#include "maskmark/distortions.hpp"
#include "maskmark/image_io.hpp"
#include "maskmark/message.hpp"
#include "maskmark/metrics.hpp"
#include "maskmark/ops.hpp"
#include "maskmark/trainer.hpp"

namespace maskmark {

const std::vector<std::pair<double, double>>& eval_bucket_ranges() {
  static const std::vector<std::pair<double, double>> ranges = {
      {0.01, 0.05}, {0.05, 0.10}, {0.10, 0.20}, {0.20, 0.30}, {0.30, 0.40}, {0.40, 0.50},
      {0.50, 0.60}, {0.60, 0.70}, {0.70, 0.80}, {0.80, 0.90}, {0.90, 0.95}, {0.95, 0.99},
  };
  return ranges;
}

int eval_bucket_of(double ratio) {
  const auto& ranges = eval_bucket_ranges();
  for (size_t i = 0; i < ranges.size(); ++i)
    if (ratio >= ranges[i].first && ratio < ranges[i].second) return int(i);
  return -1;
}

std::vector<EvalBucket> build_local_eval_set(int num_images, const MaskSource& source,
                                             int per_bucket, Rng& rng, int64_t max_draws) {
  check_arg(num_images >= 1, "build_local_eval_set needs at least one image");
  check_arg(per_bucket >= 2 && per_bucket % 2 == 0,
            "per_bucket must be even: each direct draw brings its inverted twin");
  check_arg(max_draws >= 1, "max_draws must be positive");

  const auto& ranges = eval_bucket_ranges();
  std::vector<EvalBucket> buckets(ranges.size());
  for (size_t i = 0; i < ranges.size(); ++i) {
    buckets[i].lo = ranges[i].first;
    buckets[i].hi = ranges[i].second;
  }

  // A draw is accepted only while its own bucket still wants direct masks
  // AND its inverted twin lands exactly in the mirror bucket (a ratio on a
  // bucket's lower bound sends the twin one bucket too high — those draws
  // are discarded). Mirror inverted counts then track direct counts in
  // lockstep, so filling every direct half fills every bucket.
  const int direct_needed = per_bucket / 2;
  std::vector<int> direct(ranges.size(), 0);
  int filled = 0;
  for (int64_t draw = 0; draw < max_draws && filled < int(ranges.size()); ++draw) {
    Mask m = source(rng);
    const int b = eval_bucket_of(area_ratio(m));
    if (b < 0 || direct[size_t(b)] >= direct_needed) continue;
    Mask inv = invert_mask(m);
    const int bi = eval_bucket_of(area_ratio(inv));
    if (bi != int(ranges.size()) - 1 - b) continue;
    const int id = int(rng.uniform_int(0, num_images - 1));
    buckets[size_t(b)].samples.push_back({id, std::move(m), false});
    buckets[size_t(bi)].samples.push_back({id, std::move(inv), true});
    if (++direct[size_t(b)] == direct_needed) ++filled;
  }

  if (filled < int(ranges.size())) {
    std::ostringstream os;
    os << "eval bucket starvation after " << max_draws << " draws:";
    for (size_t i = 0; i < ranges.size(); ++i)
      if (direct[i] < direct_needed)
        os << " [" << ranges[i].first * 100 << "%," << ranges[i].second * 100 << "%) has "
           << direct[i] << "/" << direct_needed << " direct masks;";
    throw std::runtime_error(os.str());
  }
  return buckets;
}

namespace {

void check_suites(const std::vector<std::string>& suites) {
  check_arg(!suites.empty(), "no evaluation suites selected");
  for (const auto& s : suites)
    check_arg(s == "none" || s == "valuemetric" || s == "geometric",
              "unknown evaluation suite: " + s);
}

void check_native_images(const ModelBundle& model, const std::vector<Tensor>& images,
                         const char* who) {
  check_arg(!images.empty(), std::string(who) + " needs at least one image");
  const int s = model.cfg.image_size;
  for (const Tensor& im : images)
    check_arg(im.defined() && im.shape().size() == 4 && im.shape()[0] == 1 &&
                  im.shape()[1] == 3 && im.shape()[2] == s && im.shape()[3] == s,
              std::string(who) + " expects native-resolution [1,3,S,S] images");
}

std::optional<double> mu_override(double mu) {
  return mu > 0 ? std::optional<double>(mu) : std::nullopt;
}

bool is_no_region(const std::runtime_error& e) {
  return std::string(e.what()) == "no watermark region detected";
}

std::string hex_field(uint64_t v) { return to_hex64(v); }

}  // namespace

EvalReport evaluate_robustness(const ModelBundle& model, const std::vector<Tensor>& images,
                               const std::vector<EvalBucket>& eval_set,
                               const RobustnessOptions& opt) {
  NoGradGuard ng;
  check_suites(opt.suites);
  check_native_images(model, images, "evaluate_robustness");

  struct Accum {
    double lo = 0, hi = 0;
    int64_t n = 0, failures = 0;
    double acc = 0, iw = 0, iu = 0;
  };
  std::map<std::pair<std::string, int>, Accum> table;
  const DistortionPool vpool = DistortionPool::eval_valuemetric();
  const DistortionPool gpool = DistortionPool::eval_geometric();
  Rng rng(opt.seed);
  double psnr_sum = 0, ssim_sum = 0;
  int64_t scored = 0;

  for (const std::string& suite : opt.suites) {
    for (size_t b = 0; b < eval_set.size(); ++b) {
      for (size_t si = 0; si < eval_set[b].samples.size(); ++si) {
        const EvalSample& sample = eval_set[b].samples[si];
        check_arg(sample.image_id >= 0 && sample.image_id < int(images.size()),
                  "eval sample references an image id outside the provided set");
        const Tensor& img = images[size_t(sample.image_id)];
        const std::vector<uint8_t> bits = sample_message(model.cfg.l, rng);

        // D has no mask channel: embed across the frame, then keep the
        // watermark only inside the sample region. ED embeds there directly.
        Tensor fused =
            model.cfg.is_ed()
                ? embed_local(model, img, bits, sample.mask, mu_override(opt.mu))
                : fuse(embed_global(model, img, bits, mu_override(opt.mu)), img,
                       mask_to_tensor(sample.mask));

        // Visual quality is measured on what a user would save: 8-bit files.
        psnr_sum += psnr(tensor_to_image(fused), tensor_to_image(img));
        ssim_sum += ssim(tensor_to_image(fused), tensor_to_image(img));
        ++scored;

        std::string name = "none";
        Tensor distorted = fused;
        Mask after = sample.mask;
        if (suite == "valuemetric") {
          DistortionSpec spec = sample_distortion(vpool, rng, true);
          distorted = apply_valuemetric(fused, spec, rng);
          name = distortion_kind_name(spec.kind);
        } else if (suite == "geometric") {
          DistortionSpec spec = sample_distortion(gpool, rng, true);
          auto [d2, m2] = apply_geometric(fused, mask_to_tensor(sample.mask), spec, rng);
          distorted = d2;
          after = binarize_mask(mask_from_tensor(m2));
          name = distortion_kind_name(spec.kind);
        }

        Accum& cell = table[{name, int(b)}];
        cell.lo = eval_set[b].lo;
        cell.hi = eval_set[b].hi;
        ++cell.n;
        try {
          ExtractionResult r = locate_and_extract(model, distorted, opt.threshold);
          cell.acc += bit_accuracy(r.message, bits);
          cell.iw += iou(r.mask, after, IouClass::watermarked);
          cell.iu += iou(r.mask, after, IouClass::unwatermarked);
        } catch (const std::runtime_error& e) {
          // A miss is a scored zero; anything else aborts with the sample id.
          if (!is_no_region(e)) {
            throw std::runtime_error("suite " + suite + ", bucket " + std::to_string(b) +
                                     ", sample " + std::to_string(si) + ": " + e.what());
          }
          ++cell.failures;
        }
      }
    }
  }

  EvalReport report;
  report.seed = opt.seed;
  for (const auto& [key, a] : table) {
    EvalCell c;
    c.distortion = key.first;
    c.bucket_lo = a.lo;
    c.bucket_hi = a.hi;
    c.n = a.n;
    c.failures = a.failures;
    c.bit_acc = a.acc / double(a.n);
    c.iou_watermarked = a.iw / double(a.n);
    c.iou_unwatermarked = a.iu / double(a.n);
    report.cells.push_back(std::move(c));
  }
  if (scored > 0) {
    report.psnr_mean = psnr_sum / double(scored);
    report.ssim_mean = ssim_sum / double(scored);
  }
  report.images_scored = scored;
  return report;
}

uint64_t EvalReport::provenance_digest() const {
  uint64_t h = fnv1a64(checkpoint_id);
  h = fnv1a64(&config_digest, sizeof(config_digest), h);
  h = fnv1a64(&seed, sizeof(seed), h);
  return h;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["checkpoint"] = checkpoint_id;
  j["config_digest"] = hex_field(config_digest);
  j["seed"] = seed;
  j["provenance_digest"] = hex_field(provenance_digest());
  j["psnr_mean"] = psnr_mean;
  j["ssim_mean"] = ssim_mean;
  j["images_scored"] = images_scored;
  j["cells"] = nlohmann::json::array();
  for (const EvalCell& c : cells) {
    j["cells"].push_back({{"distortion", c.distortion},
                          {"bucket_lo", c.bucket_lo},
                          {"bucket_hi", c.bucket_hi},
                          {"n", c.n},
                          {"failures", c.failures},
                          {"bit_acc", c.bit_acc},
                          {"iou_watermarked", c.iou_watermarked},
                          {"iou_unwatermarked", c.iou_unwatermarked}});
  }
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "distortion,bucket_lo,bucket_hi,n,failures,bit_acc,iou_watermarked,iou_unwatermarked\n";
  for (const EvalCell& c : cells)
    os << c.distortion << ',' << c.bucket_lo << ',' << c.bucket_hi << ',' << c.n << ','
       << c.failures << ',' << c.bit_acc << ',' << c.iou_watermarked << ','
       << c.iou_unwatermarked << '\n';
  return os.str();
}

MultiWatermarkReport evaluate_multi_watermark(const ModelBundle& model,
                                              const std::vector<Tensor>& images, int n_lo,
                                              int n_hi, double area_frac,
                                              const RobustnessOptions& opt) {
  NoGradGuard ng;
  check_arg(model.cfg.is_ed(), "multi-watermark evaluation requires an ED model");
  check_arg(n_lo >= 1 && n_lo <= n_hi && n_hi <= 5, "watermark count range out of [1,5]");
  check_suites(opt.suites);
  check_native_images(model, images, "evaluate_multi_watermark");

  struct Accum {
    int64_t messages = 0, unmatched = 0;
    double acc = 0, iou_sum = 0;
  };
  std::map<std::pair<int, std::string>, Accum> table;
  const DistortionPool vpool = DistortionPool::eval_valuemetric();
  const DistortionPool gpool = DistortionPool::eval_geometric();
  const int s = model.cfg.image_size;
  Rng rng(opt.seed);

  for (int n = n_lo; n <= n_hi; ++n) {
    const std::vector<Mask> layout = multi_region_layout(n, s, s, real(area_frac));
    for (const std::string& suite : opt.suites) {
      for (size_t ii = 0; ii < images.size(); ++ii) {
        // Disjoint regions: each embed leaves the others' pixels untouched,
        // so sequential local embeds compose cleanly.
        Tensor cur = images[ii];
        std::vector<std::vector<uint8_t>> msgs(static_cast<size_t>(n));
        for (int g = 0; g < n; ++g) {
          msgs[size_t(g)] = sample_message(model.cfg.l, rng);
          cur = embed_local(model, cur, msgs[size_t(g)], layout[size_t(g)],
                            mu_override(opt.mu));
        }

        Tensor distorted = cur;
        std::vector<Mask> gt = layout;
        if (suite == "valuemetric") {
          DistortionSpec spec = sample_distortion(vpool, rng, true);
          distorted = apply_valuemetric(cur, spec, rng);
        } else if (suite == "geometric") {
          // All true regions ride through the same warp in one call, stacked
          // as channels of a single mask tensor.
          DistortionSpec spec = sample_distortion(gpool, rng, true);
          Tensor stack = Tensor::zeros({1, n, s, s});
          for (int g = 0; g < n; ++g)
            std::copy(layout[size_t(g)].data.begin(), layout[size_t(g)].data.end(),
                      stack.data() + int64_t(g) * s * s);
          auto [d2, m2] = apply_geometric(cur, stack, spec, rng);
          distorted = d2;
          for (int g = 0; g < n; ++g) {
            Mask warped;
            warped.h = s;
            warped.w = s;
            warped.kind = MaskKind::composite;
            warped.data.assign(m2.data() + int64_t(g) * s * s,
                               m2.data() + int64_t(g + 1) * s * s);
            gt[size_t(g)] = binarize_mask(warped);
          }
        }

        Accum& cell = table[{n, suite}];
        cell.messages += n;
        std::vector<std::pair<Mask, std::vector<uint8_t>>> found;
        try {
          found = extract_multi(model, distorted, opt.threshold).per_region;
        } catch (const std::runtime_error& e) {
          if (!is_no_region(e)) {
            throw std::runtime_error("n=" + std::to_string(n) + ", suite " + suite +
                                     ", image " + std::to_string(ii) + ": " + e.what());
          }
        }

        // Greedy maximal-overlap assignment between true and found regions.
        std::vector<std::vector<int64_t>> overlap(size_t(n),
                                                  std::vector<int64_t>(found.size(), 0));
        for (int g = 0; g < n; ++g)
          for (size_t p = 0; p < found.size(); ++p)
            for (size_t k = 0; k < gt[size_t(g)].data.size(); ++k)
              overlap[size_t(g)][p] += gt[size_t(g)].data[k] == real(1) &&
                                       found[p].first.data[k] == real(1);
        std::vector<int> match(size_t(n), -1);
        std::vector<bool> used(found.size(), false);
        for (;;) {
          int64_t best = 0;
          int bg = -1, bp = -1;
          for (int g = 0; g < n; ++g) {
            if (match[size_t(g)] >= 0) continue;
            for (size_t p = 0; p < found.size(); ++p)
              if (!used[p] && overlap[size_t(g)][p] > best) {
                best = overlap[size_t(g)][p];
                bg = g;
                bp = int(p);
              }
          }
          if (bg < 0) break;
          match[size_t(bg)] = bp;
          used[size_t(bp)] = true;
        }
        for (int g = 0; g < n; ++g) {
          if (match[size_t(g)] < 0) {
            ++cell.unmatched;  // scored as zero accuracy and zero IoU
            continue;
          }
          const auto& [pmask, pbits] = found[size_t(match[size_t(g)])];
          cell.acc += bit_accuracy(pbits, msgs[size_t(g)]);
          cell.iou_sum += iou(pmask, gt[size_t(g)], IouClass::watermarked);
        }
      }
    }
  }

  MultiWatermarkReport report;
  report.seed = opt.seed;
  for (const auto& [key, a] : table) {
    MultiWatermarkCell c;
    c.n = key.first;
    c.suite = key.second;
    c.messages = a.messages;
    c.unmatched = a.unmatched;
    c.bit_acc = a.acc / double(a.messages);
    c.iou = a.iou_sum / double(a.messages);
    report.cells.push_back(std::move(c));
  }
  return report;
}

uint64_t MultiWatermarkReport::provenance_digest() const {
  uint64_t h = fnv1a64(checkpoint_id);
  h = fnv1a64(&config_digest, sizeof(config_digest), h);
  h = fnv1a64(&seed, sizeof(seed), h);
  return h;
}

std::string MultiWatermarkReport::to_json() const {
  nlohmann::json j;
  j["checkpoint"] = checkpoint_id;
  j["config_digest"] = hex_field(config_digest);
  j["seed"] = seed;
  j["provenance_digest"] = hex_field(provenance_digest());
  j["cells"] = nlohmann::json::array();
  for (const MultiWatermarkCell& c : cells) {
    j["cells"].push_back({{"n", c.n},
                          {"suite", c.suite},
                          {"messages", c.messages},
                          {"unmatched", c.unmatched},
                          {"bit_acc", c.bit_acc},
                          {"iou", c.iou}});
  }
  return j.dump(2);
}

std::string MultiWatermarkReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "n,suite,messages,unmatched,bit_acc,iou\n";
  for (const MultiWatermarkCell& c : cells)
    os << c.n << ',' << c.suite << ',' << c.messages << ',' << c.unmatched << ','
       << c.bit_acc << ',' << c.iou << '\n';
  return os.str();
}

}  // namespace maskmark
