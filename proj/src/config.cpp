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

#include "maskmark/config.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "maskmark/common.hpp"

namespace maskmark {
namespace {

using json = nlohmann::json;

// Reads cfg[key] into out when present, after which the key no longer counts
// as unknown. Type errors surface as invalid_argument with the key name;
// integral fields refuse fractional numbers instead of truncating them.
template <typename T>
void take(json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  bool ok = true;
  if constexpr (std::is_same_v<T, bool>) {
    ok = it->is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = it->is_number_integer() || it->is_number_unsigned();
  }
  if (ok) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      ok = false;
    }
  }
  if (!ok)
    throw std::invalid_argument(std::string("config field '") + key + "' has the wrong type");
  obj.erase(it);
}

void reject_unknown(const json& obj, const std::string& where) {
  if (obj.empty()) return;
  std::string keys;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!keys.empty()) keys += ", ";
    keys += it.key();
  }
  throw std::invalid_argument("unknown config key(s) in " + where + ": " + keys);
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
}

// ---- nested blocks ----

void model_from_json(json j, ModelConfig& m) {
  take(j, "variant", m.variant);
  take(j, "l", m.l);
  take(j, "c_f", m.c_f);
  take(j, "image_size", m.image_size);
  take(j, "enc_base", m.enc_base);
  take(j, "enc_depth", m.enc_depth);
  take(j, "loc_base", m.loc_base);
  take(j, "ext_base", m.ext_base);
  take(j, "ext_depth", m.ext_depth);
  take(j, "codec_blocks", m.codec_blocks);
  reject_unknown(j, "model");
}

json model_to_json(const ModelConfig& m) {
  return json{{"variant", m.variant},
              {"l", m.l},
              {"c_f", m.c_f},
              {"image_size", m.image_size},
              {"enc_base", m.enc_base},
              {"enc_depth", m.enc_depth},
              {"loc_base", m.loc_base},
              {"ext_base", m.ext_base},
              {"ext_depth", m.ext_depth},
              {"codec_blocks", m.codec_blocks}};
}

void pool_from_json(json j, DistortionPool& p) {
  take(j, "geometric_enabled", p.geometric_enabled);
  auto it = j.find("entries");
  if (it != j.end()) {
    if (!it->is_array()) throw std::invalid_argument("pool 'entries' must be an array");
    p.specs.clear();
    for (json e : *it) {
      PoolEntry pe;
      std::string kind;
      take(e, "kind", kind);
      pe.kind = distortion_kind_from_name(kind);
      pe.lo = pe.hi = 0;
      take(e, "lo", pe.lo);
      pe.hi = pe.lo;
      take(e, "hi", pe.hi);
      take(e, "weight", pe.weight);
      take(e, "plugin", pe.plugin_name);
      reject_unknown(e, "pool entry");
      p.specs.push_back(pe);
    }
    j.erase(it);
  }
  reject_unknown(j, "pool");
}

json pool_to_json(const DistortionPool& p) {
  json entries = json::array();
  for (const auto& e : p.specs) {
    json je{{"kind", distortion_kind_name(e.kind)}, {"lo", e.lo}, {"hi", e.hi},
            {"weight", e.weight}};
    if (!e.plugin_name.empty()) je["plugin"] = e.plugin_name;
    entries.push_back(je);
  }
  return json{{"geometric_enabled", p.geometric_enabled}, {"entries", entries}};
}

void masks_from_json(json j, MaskGenConfig& m) {
  std::vector<double> v;
  v.assign(m.rectangle_area_range.begin(), m.rectangle_area_range.end());
  take(j, "rectangle_area_range", v);
  if (v.size() != 2) throw std::invalid_argument("rectangle_area_range needs two numbers");
  m.rectangle_area_range = {real(v[0]), real(v[1])};

  std::vector<int> s(m.irregular_stroke_count_range.begin(),
                     m.irregular_stroke_count_range.end());
  take(j, "irregular_stroke_count_range", s);
  if (s.size() != 2) throw std::invalid_argument("irregular_stroke_count_range needs two ints");
  m.irregular_stroke_count_range = {s[0], s[1]};

  v.assign(m.irregular_brush_width_range.begin(), m.irregular_brush_width_range.end());
  take(j, "irregular_brush_width_range", v);
  if (v.size() != 2) throw std::invalid_argument("irregular_brush_width_range needs two numbers");
  m.irregular_brush_width_range = {real(v[0]), real(v[1])};

  take(j, "segment_source", m.segment_source);

  v.assign(m.type_weights.begin(), m.type_weights.end());
  take(j, "type_weights", v);
  if (v.size() != 4) throw std::invalid_argument("type_weights needs four numbers");
  for (int i = 0; i < 4; ++i) m.type_weights[size_t(i)] = real(v[size_t(i)]);

  reject_unknown(j, "masks");
}

json masks_to_json(const MaskGenConfig& m) {
  return json{
      {"rectangle_area_range", {double(m.rectangle_area_range[0]), double(m.rectangle_area_range[1])}},
      {"irregular_stroke_count_range",
       {m.irregular_stroke_count_range[0], m.irregular_stroke_count_range[1]}},
      {"irregular_brush_width_range",
       {double(m.irregular_brush_width_range[0]), double(m.irregular_brush_width_range[1])}},
      {"segment_source", m.segment_source},
      {"type_weights",
       {double(m.type_weights[0]), double(m.type_weights[1]), double(m.type_weights[2]),
        double(m.type_weights[3])}}};
}

}  // namespace

// ---- TrainConfig ----

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> errs;
  try {
    model.validate();
  } catch (const std::exception& e) {
    errs.emplace_back(e.what());
  }
  if (batch_size < 1) errs.emplace_back("batch_size must be >= 1");
  if (total_steps < 1) errs.emplace_back("total_steps must be >= 1");
  if (!(lr > 0)) errs.emplace_back("lr must be > 0");
  if (warmup_steps <= 0 || warmup_steps >= total_steps)
    errs.emplace_back("warmup must be < total_steps (and > 0)");
  if (alpha < 0) errs.emplace_back("alpha must be >= 0");
  if (beta_enc < 0) errs.emplace_back("beta_enc must be >= 0");
  if (beta_dec_start < 0 || beta_dec_end < 0)
    errs.emplace_back("beta_dec endpoints must be >= 0");
  if (beta_dec_decay_steps < 1) errs.emplace_back("beta_dec_decay_steps must be >= 1");
  if (full_mask_until > all_masks_until)
    errs.emplace_back("curriculum out of order: full_mask_until > all_masks_until");
  if (all_masks_until > distortions_from)
    errs.emplace_back("curriculum out of order: all_masks_until > distortions_from");
  if (distortions_from > jnd_from)
    errs.emplace_back("curriculum out of order: distortions_from > jnd_from");
  if (full_mask_until < 0) errs.emplace_back("curriculum thresholds must be >= 0");
  if (train_mu < 0) errs.emplace_back("train_mu must be >= 0");
  if (dataset_dir.empty()) errs.emplace_back("dataset_dir must be set");
  if (run_dir.empty()) errs.emplace_back("run_dir must be set");
  if (checkpoint_every < 1) errs.emplace_back("checkpoint_every must be >= 1");
  if (keep_checkpoints < 1) errs.emplace_back("keep_checkpoints must be >= 1");
  if (log_every < 1) errs.emplace_back("log_every must be >= 1");
  if (plugin_prob < 0 || plugin_prob > 1) errs.emplace_back("plugin_prob must be in [0,1]");
  if (plugin_prob > 0 && plugin_names.empty())
    errs.emplace_back("plugin_prob > 0 needs plugin_names");
  try {
    mask_cfg.validate();
  } catch (const std::exception& e) {
    errs.emplace_back(e.what());
  }
  for (const auto& e : pool.specs)
    if (e.weight < 0) errs.emplace_back("pool weights must be non-negative");
  return errs;
}

void TrainConfig::check_valid() const {
  const auto errs = validate();
  if (errs.empty()) return;
  std::string joined = "invalid config:";
  for (const auto& e : errs) joined += "\n  - " + e;
  throw std::runtime_error(joined);
}

std::string TrainConfig::canonical() const { return train_config_to_json(*this); }

uint64_t TrainConfig::digest() const { return fnv1a64(canonical()); }

TrainConfig train_config_from_json(const std::string& text) {
  json j = parse(text);
  if (!j.is_object()) throw std::invalid_argument("config root must be an object");
  TrainConfig c;
  if (j.contains("model")) {
    model_from_json(j["model"], c.model);
    j.erase("model");
  }
  take(j, "batch_size", c.batch_size);
  take(j, "total_steps", c.total_steps);
  take(j, "lr", c.lr);
  take(j, "warmup_steps", c.warmup_steps);
  take(j, "alpha", c.alpha);
  take(j, "beta_enc", c.beta_enc);
  take(j, "beta_dec_start", c.beta_dec_start);
  take(j, "beta_dec_end", c.beta_dec_end);
  take(j, "beta_dec_decay_steps", c.beta_dec_decay_steps);
  take(j, "full_mask_until", c.full_mask_until);
  take(j, "all_masks_until", c.all_masks_until);
  take(j, "distortions_from", c.distortions_from);
  take(j, "jnd_from", c.jnd_from);
  take(j, "train_mu", c.train_mu);
  if (j.contains("pool")) {
    pool_from_json(j["pool"], c.pool);
    j.erase("pool");
  }
  if (j.contains("masks")) {
    masks_from_json(j["masks"], c.mask_cfg);
    j.erase("masks");
  }
  take(j, "dataset_dir", c.dataset_dir);
  take(j, "run_dir", c.run_dir);
  take(j, "checkpoint_every", c.checkpoint_every);
  take(j, "keep_checkpoints", c.keep_checkpoints);
  take(j, "log_every", c.log_every);
  take(j, "seed", c.seed);
  take(j, "plugin_prob", c.plugin_prob);
  take(j, "plugin_names", c.plugin_names);
  reject_unknown(j, "config");
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"model", model_to_json(c.model)},
         {"batch_size", c.batch_size},
         {"total_steps", c.total_steps},
         {"lr", c.lr},
         {"warmup_steps", c.warmup_steps},
         {"alpha", c.alpha},
         {"beta_enc", c.beta_enc},
         {"beta_dec_start", c.beta_dec_start},
         {"beta_dec_end", c.beta_dec_end},
         {"beta_dec_decay_steps", c.beta_dec_decay_steps},
         {"full_mask_until", c.full_mask_until},
         {"all_masks_until", c.all_masks_until},
         {"distortions_from", c.distortions_from},
         {"jnd_from", c.jnd_from},
         {"train_mu", c.train_mu},
         {"pool", pool_to_json(c.pool)},
         {"masks", masks_to_json(c.mask_cfg)},
         {"dataset_dir", c.dataset_dir},
         {"run_dir", c.run_dir},
         {"checkpoint_every", c.checkpoint_every},
         {"keep_checkpoints", c.keep_checkpoints},
         {"log_every", c.log_every},
         {"seed", c.seed},
         {"plugin_prob", c.plugin_prob},
         {"plugin_names", c.plugin_names}};
  return j.dump(2);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

// ---- EvalConfig ----

std::vector<std::string> EvalConfig::validate() const {
  std::vector<std::string> errs;
  if (checkpoint.empty()) errs.emplace_back("checkpoint must be set");
  if (dataset_dir.empty()) errs.emplace_back("dataset_dir must be set");
  if (out_dir.empty()) errs.emplace_back("out_dir must be set");
  if (num_images < 1) errs.emplace_back("num_images must be >= 1");
  if (per_bucket < 1) errs.emplace_back("per_bucket must be >= 1");
  if (suites.empty()) errs.emplace_back("suites must not be empty");
  for (const auto& s : suites)
    if (s != "none" && s != "valuemetric" && s != "geometric")
      errs.emplace_back("unknown suite: " + s);
  if (mu < 0) errs.emplace_back("mu must be >= 0");
  return errs;
}

void EvalConfig::check_valid() const {
  const auto errs = validate();
  if (errs.empty()) return;
  std::string joined = "invalid config:";
  for (const auto& e : errs) joined += "\n  - " + e;
  throw std::runtime_error(joined);
}

std::string EvalConfig::canonical() const { return eval_config_to_json(*this); }

uint64_t EvalConfig::digest() const { return fnv1a64(canonical()); }

EvalConfig eval_config_from_json(const std::string& text) {
  json j = parse(text);
  if (!j.is_object()) throw std::invalid_argument("config root must be an object");
  EvalConfig c;
  take(j, "checkpoint", c.checkpoint);
  take(j, "dataset_dir", c.dataset_dir);
  take(j, "out_dir", c.out_dir);
  take(j, "num_images", c.num_images);
  take(j, "per_bucket", c.per_bucket);
  take(j, "suites", c.suites);
  take(j, "mu", c.mu);
  take(j, "seed", c.seed);
  reject_unknown(j, "config");
  return c;
}

std::string eval_config_to_json(const EvalConfig& c) {
  json j{{"checkpoint", c.checkpoint}, {"dataset_dir", c.dataset_dir}, {"out_dir", c.out_dir},
         {"num_images", c.num_images}, {"per_bucket", c.per_bucket},   {"suites", c.suites},
         {"mu", c.mu},                 {"seed", c.seed}};
  return j.dump(2);
}

EvalConfig load_eval_config(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return eval_config_from_json(ss.str());
}

}  // namespace maskmark
