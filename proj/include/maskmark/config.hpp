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
#include <vector>

#include "maskmark/distortions.hpp"
#include "maskmark/mask.hpp"
#include "maskmark/models.hpp"

namespace maskmark {

// Full training recipe. Defaults are the published full-scale protocol
// (256×256, 100k steps); desk runs override sizes and thresholds.
struct TrainConfig {
  ModelConfig model;

  int batch_size = 16;
  int total_steps = 100000;
  double lr = 1e-4;
  int warmup_steps = 2000;

  double alpha = 0.5;      // mask-term weight inside the decoder loss
  double beta_enc = 1.0;
  double beta_dec_start = 20.0;
  double beta_dec_end = 0.2;
  int beta_dec_decay_steps = 5000;

  // Curriculum thresholds: full masks only below full_mask_until, every mask
  // type from there; distortions join at distortions_from; JND modulation
  // (strength train_mu) joins at jnd_from.
  int full_mask_until = 500;
  int all_masks_until = 1000;
  int distortions_from = 1000;
  int jnd_from = 5000;
  double train_mu = 1.0;

  DistortionPool pool = DistortionPool::training_default();
  MaskGenConfig mask_cfg;

  std::string dataset_dir;
  std::string run_dir = "run";
  int checkpoint_every = 1000;
  int keep_checkpoints = 3;
  int log_every = 25;
  uint64_t seed = 0;

  // Fine-tuning: with probability plugin_prob a registered plugin distortion
  // (uniform over plugin_names) replaces the pool draw.
  double plugin_prob = 0.0;
  std::vector<std::string> plugin_names;

  // Exhaustive validation: every violated invariant is reported, not just
  // the first one. Empty means valid.
  std::vector<std::string> validate() const;
  void check_valid() const;  // throws runtime_error joining validate()

  std::string canonical() const;
  uint64_t digest() const;
};

// Evaluation recipe: which checkpoint, which images, which suites.
struct EvalConfig {
  std::string checkpoint;
  std::string dataset_dir;
  std::string out_dir = "eval";
  int num_images = 200;
  int per_bucket = 20;
  // Suites: "none" (clean), "valuemetric", "geometric".
  std::vector<std::string> suites = {"none", "valuemetric", "geometric"};
  double mu = 0.0;  // 0 = use the model default
  uint64_t seed = 0;

  std::vector<std::string> validate() const;
  void check_valid() const;
  std::string canonical() const;
  uint64_t digest() const;
};

// JSON bridges. Parsing applies defaults for absent keys and rejects unknown
// keys (typos must not silently fall back to defaults).
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

EvalConfig eval_config_from_json(const std::string& text);
std::string eval_config_to_json(const EvalConfig& cfg);
EvalConfig load_eval_config(const std::string& path);

}  // namespace maskmark
