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

#include "maskmark/config.hpp"
#include "maskmark/dataio.hpp"
#include "maskmark/distortions.hpp"
#include "maskmark/models.hpp"
#include "maskmark/optimizer.hpp"

namespace maskmark {

// Scalar loss tensors; the graph hangs off l_total so one backward() covers
// everything. Identities: l_dec = l_bits + alpha*l_mask,
// l_total = beta_enc*l_enc + beta_dec*l_dec.
struct LossBundle {
  Tensor l_enc;
  Tensor l_bits;
  Tensor l_mask;
  Tensor l_dec;
  Tensor l_total;
};

// What the curriculum has switched on at a given step.
struct PhaseConfig {
  bool full_only = true;     // masks restricted to the full frame
  bool distortions_on = false;
  bool jnd_on = false;
  double beta_dec = 20.0;
};

// Masked blend: wm where mask is 1, orig elsewhere. mask is [N,1,H,W]
// against [N,3,H,W] images (broadcast over channels).
Tensor fuse(const Tensor& wm, const Tensor& orig, const Tensor& mask);

// Zeroes everything outside the mask.
Tensor isolate(const Tensor& fused, const Tensor& mask);

LossBundle compute_losses(const Tensor& wm, const Tensor& orig, const Tensor& bit_logits,
                          const Tensor& bits_gt, const Tensor& mask_pd, const Tensor& mask_gt,
                          double alpha, double beta_enc, double beta_dec);

// Pure schedule lookup; throws on step outside [0, total_steps].
PhaseConfig curriculum_state(int64_t step, const TrainConfig& cfg);

// One full training forward pass: message -> encode -> (JND|clamp) -> fuse
// -> distort -> isolate -> both decoder heads -> losses. No update. All
// randomness (masks, bits, distortion draw) comes from `rng`, so a replayed
// stream reproduces the pass exactly.
struct TrainForward {
  LossBundle losses;
  Tensor logits;              // [N,l]
  std::vector<uint8_t> bits;  // ground-truth payload, row-major
  Tensor mask_after;          // localization/isolate target (post-geometric)
  Tensor mask_pd;             // [N,1,H,W] soft prediction
  DistortionSpec spec;
};
TrainForward training_forward(const ModelBundle& model, const Tensor& batch,
                              const PhaseConfig& phase, const TrainConfig& cfg, Rng& rng);

// Per-step numbers as they go into the metrics log.
struct StepStats {
  int64_t step = 0;
  double lr = 0;
  double beta_dec = 0;
  double l_enc = 0, l_bits = 0, l_mask = 0, l_dec = 0, l_total = 0;
  double bit_acc = 0;
  double iou = 0;
  std::string distortion;
};

// Owns the model, optimizer, RNG stream, and dataset cursor of one run.
class Trainer {
 public:
  // Fresh run from cfg.seed.
  explicit Trainer(const TrainConfig& cfg);
  // strict=true: bit-exact resume; cfg must hash to the digest stored in the
  // checkpoint, and step/optimizer/RNG/dataset cursor are all restored.
  // strict=false: weights (and optimizer moments) only, counters reset —
  // the fine-tuning path, where cfg intentionally differs.
  Trainer(const TrainConfig& cfg, const std::string& checkpoint_path, bool strict);

  // One optimizer update on the given batch ([N,3,S,S] in [-1,1]).
  // Aborts with a diagnostic dump if any loss goes non-finite.
  StepStats train_step(const Tensor& batch);

  // Full loop: dataset, schedule, metrics log (run_dir/metrics.jsonl),
  // periodic checkpoints. Returns the path of the final checkpoint.
  std::string train();

  int64_t step() const { return step_; }
  ModelBundle& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

  void save(const std::string& path) const;

 private:
  TrainConfig cfg_;
  ModelBundle model_;
  AdamW opt_;
  Rng rng_;
  int64_t step_ = 0;
  int64_t data_epoch_ = 0;
  int64_t data_pos_ = 0;
};

// The published fine-tuning recipe on top of an existing config: every
// curriculum phase already on, constant beta_dec 0.3, plugins mixed in at
// probability 0.5.
TrainConfig finetune_defaults(TrainConfig cfg, std::vector<std::string> plugin_names,
                              double plugin_prob = 0.5, double beta_dec = 0.3);

}  // namespace maskmark
