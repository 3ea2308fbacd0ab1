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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "maskmark/inference.hpp"
#include "maskmark/mask.hpp"
#include "maskmark/models.hpp"
#include "maskmark/rng.hpp"

namespace maskmark {

// Evaluation-set construction and robustness sweeps. Local-watermark quality
// is reported per mask-area bucket; the 12 bucket ranges are closed under
// mask inversion, so every selected mask contributes itself to one bucket
// and its inverse to the mirror bucket.

// One evaluation case: which image, which embedding mask, and whether the
// mask is the inverse of a directly drawn one.
struct EvalSample {
  int image_id = 0;
  Mask mask;
  bool inverted = false;
};

// All samples whose mask/frame area ratio falls in [lo, hi).
struct EvalBucket {
  double lo = 0, hi = 0;
  std::vector<EvalSample> samples;
};

// The fixed 12 area ranges, as fractions: 1-5%, 5-10%, then decades up to
// 80-90%, then 90-95% and 95-99%.
const std::vector<std::pair<double, double>>& eval_bucket_ranges();
// Index of the range containing `ratio` (half-open bounds), or -1.
int eval_bucket_of(double ratio);

// Draws masks from `source` until every bucket holds per_bucket samples:
// half directly drawn, half inverted spills from the mirror bucket. Image
// ids are drawn uniformly from [0, num_images). Throws with per-bucket
// counts if the source cannot fill every bucket within max_draws.
using MaskSource = std::function<Mask(Rng&)>;
std::vector<EvalBucket> build_local_eval_set(int num_images, const MaskSource& source,
                                             int per_bucket, Rng& rng,
                                             int64_t max_draws = 500000);

// One aggregate row of a robustness report.
struct EvalCell {
  std::string distortion;  // drawn distortion kind, or "none"
  double bucket_lo = 0, bucket_hi = 0;
  int64_t n = 0;         // samples aggregated, detector misses included
  int64_t failures = 0;  // samples where no region was detected (scored 0)
  double bit_acc = 0;
  double iou_watermarked = 0;
  double iou_unwatermarked = 0;
};

struct EvalReport {
  std::vector<EvalCell> cells;  // sorted by (distortion, bucket_lo)
  double psnr_mean = 0;         // embedding quality over 8-bit exports
  double ssim_mean = 0;
  int64_t images_scored = 0;

  // Provenance: who produced these numbers. checkpoint_id and config_digest
  // are the caller's; seed is copied from the options actually used.
  std::string checkpoint_id;
  uint64_t config_digest = 0;
  uint64_t seed = 0;
  uint64_t provenance_digest() const;

  std::string to_json() const;
  std::string to_csv() const;  // rows keyed (distortion, bucket)
};

struct RobustnessOptions {
  std::vector<std::string> suites{"none", "valuemetric", "geometric"};
  double mu = 0;  // 0 = the model variant's default strength
  real threshold = real(0.5);
  uint64_t seed = 0;
};

// For every sample: embed (D embeds globally then blends per the sample
// mask; ED embeds locally), distort per suite, decode with
// locate_and_extract, and aggregate bit accuracy plus both-class IoU per
// (drawn distortion, bucket). A detector miss scores zero and is counted in
// the cell's failure column. Images must be native-resolution tensors
// indexed by the samples' image ids.
EvalReport evaluate_robustness(const ModelBundle& model, const std::vector<Tensor>& images,
                               const std::vector<EvalBucket>& eval_set,
                               const RobustnessOptions& opt);

// One aggregate row of the multi-watermark report: all messages embedded at
// watermark count n under one suite.
struct MultiWatermarkCell {
  int n = 0;
  std::string suite;
  int64_t messages = 0;   // embedded messages scored (n per image)
  int64_t unmatched = 0;  // messages whose region was never recovered
  double bit_acc = 0;     // mean over all messages, unmatched scored 0
  double iou = 0;         // mean predicted-vs-true region IoU, unmatched 0
};

struct MultiWatermarkReport {
  std::vector<MultiWatermarkCell> cells;  // sorted by (n, suite)
  std::string checkpoint_id;
  uint64_t config_digest = 0;
  uint64_t seed = 0;
  uint64_t provenance_digest() const;

  std::string to_json() const;
  std::string to_csv() const;
};

// For each n in [n_lo, n_hi]: embed n distinct messages per image into the
// disjoint multi_region_layout squares, distort, decode with extract_multi,
// match recovered regions to true regions by greedy maximal overlap, and
// score every embedded message (unrecovered ones as zero). ED models only.
MultiWatermarkReport evaluate_multi_watermark(const ModelBundle& model,
                                              const std::vector<Tensor>& images, int n_lo,
                                              int n_hi, double area_frac,
                                              const RobustnessOptions& opt);

}  // namespace maskmark
