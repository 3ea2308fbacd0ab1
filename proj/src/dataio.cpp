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

#include "maskmark/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "maskmark/common.hpp"
#include "maskmark/image_io.hpp"
#include "maskmark/ops.hpp"
#include "maskmark/rng.hpp"

namespace maskmark {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](char c) { return char(std::tolower(c)); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

}  // namespace

ImageDataset::ImageDataset(const std::string& root, int target_size, uint64_t seed)
    : target_(target_size), seed_(seed) {
  check_arg(target_size >= 1, "dataset target size must be >= 1");
  check(fs::is_directory(root), "dataset root is not a directory: " + root);
  std::vector<std::string> candidates;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && has_image_ext(entry.path()))
      candidates.push_back(entry.path().string());
  std::sort(candidates.begin(), candidates.end());
  for (const auto& path : candidates) {
    try {
      ImageU8 img = load_image(path);
      check(img.h >= 1 && img.w >= 1, "degenerate image");
      files_.push_back(path);
    } catch (const std::exception&) {
      ++skipped_;  // scraped directories routinely contain broken files
    }
  }
  check(!files_.empty(), "dataset is empty: no decodable image in " + root);
}

const std::string& ImageDataset::path(int64_t i) const {
  check_arg(i >= 0 && i < size(), "dataset index out of range");
  return files_[size_t(i)];
}

Tensor ImageDataset::get(int64_t i) const {
  Tensor t = image_to_tensor(load_image(path(i)));
  const int h = t.dim(2), w = t.dim(3);
  // Short side to target, aspect preserved, then center crop.
  int oh, ow;
  if (h <= w) {
    oh = target_;
    ow = std::max(target_, int(std::lround(double(w) * target_ / h)));
  } else {
    ow = target_;
    oh = std::max(target_, int(std::lround(double(h) * target_ / w)));
  }
  if (oh != h || ow != w) t = resize_bilinear(t, oh, ow);
  if (oh == target_ && ow == target_) return t;
  const int y0 = (oh - target_) / 2, x0 = (ow - target_) / 2;
  Tensor out = Tensor::zeros({1, 3, target_, target_});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < target_; ++y)
      std::memcpy(out.data() + (int64_t(c) * target_ + y) * target_,
                  t.data() + (int64_t(c) * oh + y0 + y) * ow + x0,
                  sizeof(real) * size_t(target_));
  return out;
}

Tensor ImageDataset::batch(const std::vector<int64_t>& idx) const {
  check_arg(!idx.empty(), "batch needs at least one index");
  Tensor out = Tensor::zeros({int(idx.size()), 3, target_, target_});
  const int64_t stride = int64_t(3) * target_ * target_;
  for (size_t n = 0; n < idx.size(); ++n) {
    Tensor one = get(idx[n]);
    std::memcpy(out.data() + int64_t(n) * stride, one.data(), sizeof(real) * size_t(stride));
  }
  return out;
}

std::vector<int64_t> ImageDataset::epoch_order(int64_t epoch) const {
  std::vector<int64_t> order(static_cast<size_t>(size()));
  for (int64_t i = 0; i < size(); ++i) order[size_t(i)] = i;
  Rng rng(seed_ ^ (uint64_t(epoch) * 0x9e3779b97f4a7c15ull + 0x5bf03635ull));
  for (int64_t i = size() - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(0, i);
    std::swap(order[size_t(i)], order[size_t(j)]);
  }
  return order;
}

// ---- checkpoints ----

namespace {

constexpr const char* kMagic = "maskmark checkpoint 1";

json param_meta(const ParamList& params) {
  json arr = json::array();
  for (const auto& [name, t] : params) {
    json shape = json::array();
    for (int d = 0; d < t.ndim(); ++d) shape.push_back(t.dim(d));
    arr.push_back(json{{"name", name}, {"shape", shape}});
  }
  return arr;
}

void write_blobs(std::ofstream& out, const ParamList& params) {
  for (const auto& [name, t] : params) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(sizeof(real) * size_t(t.numel())));
  }
}

ParamList read_blobs(std::ifstream& in, const json& meta) {
  ParamList out;
  for (const auto& entry : meta) {
    std::vector<int> shape;
    for (const auto& d : entry.at("shape")) shape.push_back(d.get<int>());
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(sizeof(real) * size_t(t.numel())));
    check(in.good(), "checkpoint truncated");
    out.emplace_back(entry.at("name").get<std::string>(), t);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& c) {
  check(!c.params.empty(), "refusing to write a checkpoint with no parameters");
  check((c.opt_m.empty()) == (c.opt_v.empty()), "optimizer moments must come in pairs");
  json meta{{"format_version", c.format_version},
            {"dtype", sizeof(real) == 4 ? "f32" : "f64"},
            {"variant", c.model.variant},
            {"l", c.model.l},
            {"c_f", c.model.c_f},
            {"image_size", c.model.image_size},
            {"enc_base", c.model.enc_base},
            {"enc_depth", c.model.enc_depth},
            {"loc_base", c.model.loc_base},
            {"ext_base", c.model.ext_base},
            {"ext_depth", c.model.ext_depth},
            {"codec_blocks", c.model.codec_blocks},
            {"step", c.step},
            {"config_digest", to_hex64(c.config_digest)},
            {"model_digest", to_hex64(c.model.digest())},
            {"opt_t", c.opt_t},
            {"rng_state", c.rng_state},
            {"data_epoch", c.data_epoch},
            {"data_pos", c.data_pos},
            {"params", param_meta(c.params)},
            {"has_optimizer", !c.opt_m.empty()}};
  if (!c.opt_m.empty()) {
    meta["opt_m"] = param_meta(c.opt_m);
    meta["opt_v"] = param_meta(c.opt_v);
  }
  const std::string mtext = meta.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    check(out.good(), "cannot write checkpoint: " + path);
    out << kMagic << "\n" << mtext.size() << "\n" << mtext;
    write_blobs(out, c.params);
    write_blobs(out, c.opt_m);
    write_blobs(out, c.opt_v);
    check(out.good(), "checkpoint write failed: " + path);
  }
  fs::rename(tmp, path);  // atomic replace so a crash never leaves a torn file
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint: " + path);
  std::string magic;
  std::getline(in, magic);
  check(magic == kMagic, "not a checkpoint file (bad magic): " + path);
  std::string len_line;
  std::getline(in, len_line);
  size_t mlen = 0;
  try {
    mlen = std::stoul(len_line);
  } catch (const std::exception&) {
    check(false, "corrupt checkpoint header: " + path);
  }
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), std::streamsize(mlen));
  check(in.good(), "checkpoint truncated: " + path);
  json meta;
  try {
    meta = json::parse(mtext);
  } catch (const json::exception&) {
    throw std::runtime_error("corrupt checkpoint metadata: " + path);
  }

  CheckpointData c;
  c.format_version = meta.at("format_version").get<int>();
  check(c.format_version == 1,
        "unsupported checkpoint format_version " + std::to_string(c.format_version));
  const std::string dtype = meta.at("dtype").get<std::string>();
  const std::string want = sizeof(real) == 4 ? "f32" : "f64";
  check(dtype == want, "checkpoint dtype " + dtype + " does not match this build (" + want + ")");
  c.model.variant = meta.at("variant").get<std::string>();
  c.model.l = meta.at("l").get<int>();
  c.model.c_f = meta.at("c_f").get<int>();
  c.model.image_size = meta.at("image_size").get<int>();
  c.model.enc_base = meta.at("enc_base").get<int>();
  c.model.enc_depth = meta.at("enc_depth").get<int>();
  c.model.loc_base = meta.at("loc_base").get<int>();
  c.model.ext_base = meta.at("ext_base").get<int>();
  c.model.ext_depth = meta.at("ext_depth").get<int>();
  c.model.codec_blocks = meta.at("codec_blocks").get<int>();
  c.step = meta.at("step").get<int64_t>();
  c.config_digest = std::stoull(meta.at("config_digest").get<std::string>(), nullptr, 16);
  c.opt_t = meta.at("opt_t").get<int64_t>();
  c.rng_state = meta.at("rng_state").get<std::string>();
  c.data_epoch = meta.at("data_epoch").get<int64_t>();
  c.data_pos = meta.at("data_pos").get<int64_t>();

  c.params = read_blobs(in, meta.at("params"));
  if (meta.at("has_optimizer").get<bool>()) {
    c.opt_m = read_blobs(in, meta.at("opt_m"));
    c.opt_v = read_blobs(in, meta.at("opt_v"));
  }
  const uint64_t want_digest = std::stoull(meta.at("model_digest").get<std::string>(), nullptr, 16);
  check(c.model.digest() == want_digest, "checkpoint model digest mismatch: " + path);
  return c;
}

void check_model_compatible(const CheckpointData& ckpt, const ModelConfig& cfg) {
  check(ckpt.model.digest() == cfg.digest(),
        "config digest mismatch: checkpoint has " + ckpt.model.canonical() + " but run wants " +
            cfg.canonical());
}

void load_params(ModelBundle& model, const ParamList& params) {
  ParamList live = model.params();
  check(live.size() == params.size(), "parameter list size mismatch");
  for (size_t i = 0; i < live.size(); ++i) {
    check(live[i].first == params[i].first,
          "parameter name mismatch: " + live[i].first + " vs " + params[i].first);
    Tensor& dst = live[i].second;
    const Tensor& src = params[i].second;
    check(dst.shape() == src.shape(), "parameter shape mismatch: " + live[i].first);
    std::memcpy(dst.data(), src.data(), sizeof(real) * size_t(src.numel()));
  }
}

ModelBundle model_from_checkpoint(const CheckpointData& ckpt) {
  ModelBundle model = build_model(ckpt.model, /*seed=*/0);
  load_params(model, ckpt.params);
  return model;
}

}  // namespace maskmark
