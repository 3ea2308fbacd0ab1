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

#include "maskmark/models.hpp"
#include "maskmark/tensor.hpp"

namespace maskmark {

// Directory of PNG/JPEG files normalized to [-1,1] tensors of a fixed square
// size (short-side resize, then center crop). Construction indexes and
// validates every file; undecodable ones are skipped and counted, never
// fatal. Iteration order is a pure function of (seed, epoch).
class ImageDataset {
 public:
  ImageDataset(const std::string& root, int target_size, uint64_t seed);

  int64_t size() const { return int64_t(files_.size()); }
  int target_size() const { return target_; }
  int skipped() const { return skipped_; }
  const std::string& path(int64_t i) const;

  Tensor get(int64_t i) const;                            // [1,3,S,S]
  Tensor batch(const std::vector<int64_t>& idx) const;    // [N,3,S,S]

  // Deterministic shuffle for the given epoch; same (seed, epoch) → same
  // order, so a resumed run continues exactly where it stopped.
  std::vector<int64_t> epoch_order(int64_t epoch) const;

 private:
  std::vector<std::string> files_;
  int target_ = 0;
  uint64_t seed_ = 0;
  int skipped_ = 0;
};

// Everything a resumed run needs, bit-exact: model skeleton + weights,
// optimizer moments, RNG stream, and the dataset cursor.
struct CheckpointData {
  int format_version = 1;
  ModelConfig model;
  int64_t step = 0;
  uint64_t config_digest = 0;  // digest of the owning TrainConfig; 0 if none
  ParamList params;
  ParamList opt_m;  // empty when no optimizer state was saved
  ParamList opt_v;
  int64_t opt_t = 0;
  std::string rng_state;
  int64_t data_epoch = 0;
  int64_t data_pos = 0;
};

// Single-file container: plain-text header + JSON metadata + raw float32
// blobs. Round trip restores every value bit-exact.
void save_checkpoint(const std::string& path, const CheckpointData& ckpt);
CheckpointData load_checkpoint(const std::string& path);

// Guards against pouring weights into an incompatible skeleton.
void check_model_compatible(const CheckpointData& ckpt, const ModelConfig& cfg);

// Builds the model from the checkpoint's skeleton and loads the weights.
ModelBundle model_from_checkpoint(const CheckpointData& ckpt);

// Copies checkpoint parameter values into an existing bundle (names and
// shapes must match exactly).
void load_params(ModelBundle& model, const ParamList& params);

}  // namespace maskmark
