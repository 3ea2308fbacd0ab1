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

#include "maskmark/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "maskmark/common.hpp"
#include "maskmark/jnd.hpp"
#include "maskmark/mask.hpp"
#include "maskmark/message.hpp"
#include "maskmark/metrics.hpp"
#include "maskmark/ops.hpp"

namespace maskmark {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

}  // namespace

Tensor fuse(const Tensor& wm, const Tensor& orig, const Tensor& mask) {
  check_arg(same_shape(wm, orig), "fuse: image shapes differ");
  return add(mul_bcast(wm, mask), mul_bcast(orig, affine(mask, real(-1), real(1))));
}

Tensor isolate(const Tensor& fused, const Tensor& mask) { return mul_bcast(fused, mask); }

LossBundle compute_losses(const Tensor& wm, const Tensor& orig, const Tensor& bit_logits,
                          const Tensor& bits_gt, const Tensor& mask_pd, const Tensor& mask_gt,
                          double alpha, double beta_enc, double beta_dec) {
  LossBundle b;
  b.l_enc = mse_loss(wm, orig);
  b.l_bits = mse_loss(bit_logits, bits_gt);
  b.l_mask = mse_loss(mask_pd, mask_gt);
  b.l_dec = axpby(b.l_bits, real(1), b.l_mask, real(alpha));
  b.l_total = axpby(b.l_enc, real(beta_enc), b.l_dec, real(beta_dec));
  return b;
}

PhaseConfig curriculum_state(int64_t step, const TrainConfig& cfg) {
  check_arg(step >= 0 && step <= cfg.total_steps, "step out of range");
  PhaseConfig p;
  p.full_only = step < cfg.full_mask_until;
  p.distortions_on = step >= cfg.distortions_from;
  p.jnd_on = step >= cfg.jnd_from;
  if (step < cfg.beta_dec_decay_steps) {
    const double t = double(step) / double(cfg.beta_dec_decay_steps);
    p.beta_dec = cfg.beta_dec_start + (cfg.beta_dec_end - cfg.beta_dec_start) * t;
  } else {
    p.beta_dec = cfg.beta_dec_end;
  }
  return p;
}

TrainForward training_forward(const ModelBundle& model, const Tensor& batch,
                              const PhaseConfig& phase, const TrainConfig& cfg, Rng& rng) {
  check_arg(batch.ndim() == 4 && batch.dim(1) == 3, "batch must be [N,3,H,W]");
  const int n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  const bool ed = model.cfg.variant == "ED";

  std::vector<Mask> masks;
  masks.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    masks.push_back(phase.full_only ? gen_full_mask(h, w)
                                    : sample_training_mask(h, w, rng, cfg.mask_cfg));
  Tensor mask_t = masks_to_tensor(masks);

  TrainForward out;
  out.bits = sample_message(model.cfg.l * n, rng);
  Tensor bits_t = messages_to_tensor(out.bits, n, model.cfg.l);

  Tensor enc = model.encode(batch, bits_t, ed ? mask_t : Tensor());
  Tensor wm = phase.jnd_on ? apply_jnd_modulation(batch, enc, real(cfg.train_mu))
                           : clamp(enc, real(-1), real(1));
  Tensor fused = fuse(wm, batch, mask_t);

  // One draw covers the whole batch; plugins, when armed, preempt the pool.
  if (phase.distortions_on && cfg.plugin_prob > 0 && !cfg.plugin_names.empty() &&
      rng.bernoulli(cfg.plugin_prob)) {
    out.spec.kind = DistortionKind::plugin;
    out.spec.plugin_name =
        cfg.plugin_names[size_t(rng.uniform_int(0, int64_t(cfg.plugin_names.size()) - 1))];
    out.spec.seed = rng.next_u64();
  } else {
    out.spec = sample_distortion(cfg.pool, rng, phase.distortions_on);
  }

  Tensor distorted;
  out.mask_after = mask_t;
  if (is_geometric(out.spec.kind)) {
    auto [img2, mask2] = apply_geometric(fused, mask_t, out.spec, rng);
    distorted = img2;
    out.mask_after = mask2;
  } else {
    distorted = apply_valuemetric(fused, out.spec, rng);
  }

  Tensor isolated = isolate(distorted, out.mask_after);
  out.mask_pd = model.predict_mask(distorted);
  out.logits = model.extract_bits(isolated);
  out.losses = compute_losses(wm, batch, out.logits, bits_t, out.mask_pd, out.mask_after,
                              cfg.alpha, cfg.beta_enc, phase.beta_dec);
  return out;
}

// ---- Trainer ----

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      model_((cfg.check_valid(), build_model(cfg.model, cfg.seed))),
      opt_(model_.params(), cfg.lr),
      rng_(Rng(cfg.seed).fork(1)) {}

Trainer::Trainer(const TrainConfig& cfg, const std::string& checkpoint_path, bool strict)
    : Trainer(cfg) {
  CheckpointData ckpt = load_checkpoint(checkpoint_path);
  if (strict) {
    check(ckpt.config_digest == cfg_.digest(),
          "config digest mismatch: checkpoint " + checkpoint_path +
              " was written by a different training config");
    load_params(model_, ckpt.params);
    check(!ckpt.opt_m.empty(), "checkpoint has no optimizer state; cannot resume");
    opt_.load_state(ckpt.opt_m, ckpt.opt_v, ckpt.opt_t);
    step_ = ckpt.step;
    rng_.load_state(ckpt.rng_state);
    data_epoch_ = ckpt.data_epoch;
    data_pos_ = ckpt.data_pos;
  } else {
    check_model_compatible(ckpt, cfg_.model);
    load_params(model_, ckpt.params);
    if (!ckpt.opt_m.empty()) opt_.load_state(ckpt.opt_m, ckpt.opt_v, ckpt.opt_t);
  }
}

StepStats Trainer::train_step(const Tensor& batch) {
  const PhaseConfig phase = curriculum_state(step_, cfg_);
  TrainForward fwd = training_forward(model_, batch, phase, cfg_, rng_);

  const double le = double(fwd.losses.l_enc.item());
  const double lb = double(fwd.losses.l_bits.item());
  const double lm = double(fwd.losses.l_mask.item());
  const double ld = double(fwd.losses.l_dec.item());
  const double lt = double(fwd.losses.l_total.item());
  if (!std::isfinite(lt) || !std::isfinite(le) || !std::isfinite(lb) || !std::isfinite(lm)) {
    json dump{{"step", step_},
              {"l_enc", le},
              {"l_bits", lb},
              {"l_mask", lm},
              {"l_dec", ld},
              {"l_total", lt},
              {"distortion", distortion_kind_name(fwd.spec.kind)},
              {"distortion_param", fwd.spec.param},
              {"beta_dec", phase.beta_dec},
              {"jnd_on", phase.jnd_on}};
    std::string where = "(dump failed)";
    try {
      fs::create_directories(cfg_.run_dir);
      const std::string path = cfg_.run_dir + "/nan_dump_step_" + std::to_string(step_) + ".json";
      std::ofstream out(path);
      out << dump.dump(2) << "\n";
      if (out.good()) where = path;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("non-finite loss at step " + std::to_string(step_) + "; state " +
                             where);
  }

  opt_.zero_grad();
  fwd.losses.l_total.backward();
  opt_.set_lr(lr_schedule(step_, cfg_.total_steps, cfg_.warmup_steps, cfg_.lr));
  opt_.step();
  ++step_;

  StepStats s;
  s.step = step_;
  s.lr = opt_.lr();
  s.beta_dec = phase.beta_dec;
  s.l_enc = le;
  s.l_bits = lb;
  s.l_mask = lm;
  s.l_dec = ld;
  s.l_total = lt;
  s.bit_acc = bit_accuracy(bits_from_logits(fwd.logits), fwd.bits);
  s.distortion = distortion_kind_name(fwd.spec.kind);

  double iou_sum = 0;
  const int n = batch.dim(0);
  for (int i = 0; i < n; ++i)
    iou_sum += iou(binarize_mask(mask_from_tensor(fwd.mask_pd, i)),
                   binarize_mask(mask_from_tensor(fwd.mask_after, i)),
                   IouClass::watermarked);
  s.iou = iou_sum / n;
  return s;
}

std::string Trainer::train() {
  ImageDataset data(cfg_.dataset_dir, cfg_.model.image_size, cfg_.seed);
  check(data.size() >= cfg_.batch_size,
        "dataset has fewer images than one batch (" + std::to_string(data.size()) + " < " +
            std::to_string(cfg_.batch_size) + ")");
  fs::create_directories(cfg_.run_dir);
  std::ofstream log(cfg_.run_dir + "/metrics.jsonl", std::ios::app);
  check(log.good(), "cannot open metrics log in " + cfg_.run_dir);

  std::vector<int64_t> order = data.epoch_order(data_epoch_);
  std::vector<std::string> kept;
  for (int64_t step = step_; step < cfg_.total_steps; step = step_) {
    if (data_pos_ + cfg_.batch_size > data.size()) {
      ++data_epoch_;
      data_pos_ = 0;
      order = data.epoch_order(data_epoch_);
    }
    std::vector<int64_t> idx(order.begin() + data_pos_,
                             order.begin() + data_pos_ + cfg_.batch_size);
    data_pos_ += cfg_.batch_size;

    StepStats s = train_step(data.batch(idx));

    if (s.step == 1 || s.step % cfg_.log_every == 0 || s.step == cfg_.total_steps) {
      json line{{"step", s.step},       {"lr", s.lr},           {"beta_dec", s.beta_dec},
                {"l_enc", s.l_enc},     {"l_bits", s.l_bits},   {"l_mask", s.l_mask},
                {"l_dec", s.l_dec},     {"l_total", s.l_total}, {"bit_acc", s.bit_acc},
                {"iou", s.iou},         {"distortion", s.distortion}};
      log << line.dump() << "\n";
      log.flush();
    }
    if (s.step % cfg_.checkpoint_every == 0 || s.step == cfg_.total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%08lld.bin", static_cast<long long>(s.step));
      const std::string path = cfg_.run_dir + "/" + name;
      save(path);
      kept.push_back(path);
      while (int(kept.size()) > cfg_.keep_checkpoints) {
        std::error_code ec;
        fs::remove(kept.front(), ec);  // best effort; stale files are harmless
        kept.erase(kept.begin());
      }
    }
  }
  check(!kept.empty(), "training loop produced no checkpoint");
  return kept.back();
}

void Trainer::save(const std::string& path) const {
  CheckpointData c;
  c.model = cfg_.model;
  c.step = step_;
  c.config_digest = cfg_.digest();
  c.params = model_.params();
  c.opt_m = opt_.moments_m();
  c.opt_v = opt_.moments_v();
  c.opt_t = opt_.t();
  c.rng_state = rng_.save_state();
  c.data_epoch = data_epoch_;
  c.data_pos = data_pos_;
  save_checkpoint(path, c);
}

TrainConfig finetune_defaults(TrainConfig cfg, std::vector<std::string> plugin_names,
                              double plugin_prob, double beta_dec) {
  cfg.full_mask_until = 0;
  cfg.all_masks_until = 0;
  cfg.distortions_from = 0;
  cfg.jnd_from = 0;
  cfg.beta_dec_start = beta_dec;
  cfg.beta_dec_end = beta_dec;
  cfg.plugin_prob = plugin_prob;
  cfg.plugin_names = std::move(plugin_names);
  return cfg;
}

}  // namespace maskmark
