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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "maskmark/config.hpp"

using namespace maskmark;

namespace {

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// One violated-invariant message matching `part`, anywhere in the list.
bool lists_error(const std::vector<std::string>& errs, const std::string& part) {
  for (const auto& e : errs)
    if (contains(e, part)) return true;
  return false;
}

TrainConfig valid_train_config() {
  TrainConfig c;
  c.dataset_dir = "data";
  return c;
}

}  // namespace

TEST_CASE("train config defaults match the published protocol") {
  TrainConfig c;
  CHECK(c.batch_size == 16);
  CHECK(c.total_steps == 100000);
  CHECK(c.lr == doctest::Approx(1e-4));
  CHECK(c.warmup_steps == 2000);
  CHECK(c.alpha == doctest::Approx(0.5));
  CHECK(c.beta_enc == doctest::Approx(1.0));
  CHECK(c.beta_dec_start == doctest::Approx(20.0));
  CHECK(c.beta_dec_end == doctest::Approx(0.2));
  CHECK(c.full_mask_until == 500);
  CHECK(c.all_masks_until == 1000);
  CHECK(c.distortions_from == 1000);
  CHECK(c.jnd_from == 5000);
  CHECK(c.train_mu == doctest::Approx(1.0));
  CHECK(c.pool.specs.size() == 13);
  CHECK(c.plugin_prob == 0.0);
}

TEST_CASE("train config json round trip is a fixpoint") {
  TrainConfig c = valid_train_config();
  const std::string once = train_config_to_json(c);
  TrainConfig back = train_config_from_json(once);
  CHECK(train_config_to_json(back) == once);
  CHECK(back.digest() == c.digest());
}

TEST_CASE("empty json object yields pure defaults") {
  TrainConfig parsed = train_config_from_json("{}");
  CHECK(parsed.canonical() == TrainConfig{}.canonical());
}

TEST_CASE("nested overrides apply and leave the rest at defaults") {
  TrainConfig c = train_config_from_json(
      R"({"model": {"l": 16, "image_size": 64}, "lr": 0.001, "dataset_dir": "d"})");
  CHECK(c.model.l == 16);
  CHECK(c.model.image_size == 64);
  CHECK(c.model.c_f == 16);  // untouched default
  CHECK(c.lr == doctest::Approx(0.001));
  CHECK(c.dataset_dir == "d");
  CHECK(c.batch_size == 16);
}

TEST_CASE("digest reacts to every field it covers") {
  TrainConfig a = valid_train_config();
  TrainConfig b = a;
  CHECK(a.digest() == b.digest());
  b.lr = 2e-4;
  CHECK(a.digest() != b.digest());
  b = a;
  b.model.l = 16;
  CHECK(a.digest() != b.digest());
  b = a;
  b.pool.specs[0].lo += 1;
  CHECK(a.digest() != b.digest());
  b = a;
  b.mask_cfg.type_weights[3] = 1;
  CHECK(a.digest() != b.digest());
  b = a;
  b.seed = 99;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"learning_rate": 0.1})"),
                       doctest::Contains("unknown config key(s) in config: learning_rate"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"model": {"layers": 3}})"),
                       doctest::Contains("unknown config key(s) in model: layers"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      train_config_from_json(R"({"pool": {"entries": [{"kind": "jpeg", "q": 50}]}})"),
      doctest::Contains("unknown config key(s) in pool entry: q"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"masks": {"rect_area": [0.1, 0.5]}})"),
                       doctest::Contains("unknown config key(s) in masks: rect_area"),
                       std::invalid_argument);
}

TEST_CASE("wrong-typed values name the offending field") {
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"lr": "fast"})"),
                       doctest::Contains("config field 'lr' has the wrong type"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"batch_size": 3.7})"),
                       doctest::Contains("config field 'batch_size' has the wrong type"),
                       std::invalid_argument);
}

TEST_CASE("malformed json and non-object roots are rejected") {
  CHECK_THROWS_WITH_AS(train_config_from_json("{"), doctest::Contains("config parse error"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_config_from_json("[1, 2]"),
                       doctest::Contains("config root must be an object"), std::invalid_argument);
}

TEST_CASE("pool entries round trip, including pinned and plugin entries") {
  TrainConfig c = valid_train_config();
  c.pool.specs.clear();
  c.pool.geometric_enabled = false;
  PoolEntry jpeg;
  jpeg.kind = DistortionKind::jpeg;
  jpeg.lo = jpeg.hi = 60;
  jpeg.weight = 2.0;
  PoolEntry plug;
  plug.kind = DistortionKind::plugin;
  plug.plugin_name = "regen";
  c.pool.specs = {jpeg, plug};

  TrainConfig back = train_config_from_json(train_config_to_json(c));
  REQUIRE(back.pool.specs.size() == 2);
  CHECK(back.pool.geometric_enabled == false);
  CHECK(back.pool.specs[0].kind == DistortionKind::jpeg);
  CHECK(back.pool.specs[0].lo == doctest::Approx(60));
  CHECK(back.pool.specs[0].hi == doctest::Approx(60));
  CHECK(back.pool.specs[0].weight == doctest::Approx(2.0));
  CHECK(back.pool.specs[1].kind == DistortionKind::plugin);
  CHECK(back.pool.specs[1].plugin_name == "regen");
}

TEST_CASE("pool entry with lo only pins the parameter") {
  TrainConfig c = train_config_from_json(
      R"({"pool": {"entries": [{"kind": "gaussian_noise", "lo": 0.05}]}})");
  REQUIRE(c.pool.specs.size() == 1);
  CHECK(c.pool.specs[0].lo == doctest::Approx(0.05));
  CHECK(c.pool.specs[0].hi == doctest::Approx(0.05));
}

TEST_CASE("unknown distortion kind in a pool entry is rejected") {
  CHECK_THROWS_WITH_AS(
      train_config_from_json(R"({"pool": {"entries": [{"kind": "motion_blur"}]}})"),
      doctest::Contains("unknown distortion kind: motion_blur"), std::invalid_argument);
}

TEST_CASE("mask ranges must keep their arity") {
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"masks": {"rectangle_area_range": [0.1]}})"),
                       doctest::Contains("rectangle_area_range needs two numbers"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(train_config_from_json(R"({"masks": {"type_weights": [1, 1]}})"),
                       doctest::Contains("type_weights needs four numbers"),
                       std::invalid_argument);
}

TEST_CASE("validate reports every violation at once") {
  TrainConfig c = valid_train_config();
  c.lr = 0;
  c.batch_size = 0;
  c.warmup_steps = c.total_steps + 1;
  c.full_mask_until = 2000;  // > all_masks_until
  c.plugin_prob = 0.5;       // without plugin_names
  const auto errs = c.validate();
  CHECK(errs.size() >= 5);
  CHECK(lists_error(errs, "lr must be > 0"));
  CHECK(lists_error(errs, "batch_size must be >= 1"));
  CHECK(lists_error(errs, "warmup must be < total_steps (and > 0)"));
  CHECK(lists_error(errs, "full_mask_until > all_masks_until"));
  CHECK(lists_error(errs, "plugin_prob > 0 needs plugin_names"));

  CHECK_THROWS_WITH_AS(c.check_valid(), doctest::Contains("invalid config:"),
                       std::runtime_error);
  try {
    c.check_valid();
  } catch (const std::runtime_error& e) {
    CHECK(contains(e.what(), "lr must be > 0"));
    CHECK(contains(e.what(), "batch_size must be >= 1"));
  }
}

TEST_CASE("curriculum order violations name both fields") {
  TrainConfig c = valid_train_config();
  c.all_masks_until = 1500;
  c.distortions_from = 1200;
  CHECK(lists_error(c.validate(), "all_masks_until > distortions_from"));
  c = valid_train_config();
  c.jnd_from = 900;
  CHECK(lists_error(c.validate(), "distortions_from > jnd_from"));
}

TEST_CASE("a valid config passes check_valid") {
  CHECK_NOTHROW(valid_train_config().check_valid());
}

TEST_CASE("model validation errors surface through the train config") {
  TrainConfig c = valid_train_config();
  c.model.variant = "X";
  CHECK(!c.validate().empty());
}

TEST_CASE("config files load from disk and missing files fail loudly") {
  const std::string path = "cfg_roundtrip_test.json";
  {
    std::ofstream out(path);
    out << R"({"dataset_dir": "d", "total_steps": 42, "warmup_steps": 10})";
  }
  TrainConfig c = load_train_config(path);
  CHECK(c.total_steps == 42);
  std::remove(path.c_str());
  CHECK_THROWS_WITH_AS(load_train_config("no_such_config.json"),
                       doctest::Contains("cannot open config file"), std::runtime_error);
}

TEST_CASE("eval config round trips and validates suites") {
  EvalConfig e;
  e.checkpoint = "ck.bin";
  e.dataset_dir = "d";
  const std::string once = eval_config_to_json(e);
  EvalConfig back = eval_config_from_json(once);
  CHECK(eval_config_to_json(back) == once);
  CHECK(back.digest() == e.digest());
  CHECK(back.suites == std::vector<std::string>{"none", "valuemetric", "geometric"});

  e.suites = {"valuemetric", "thermal"};
  CHECK(lists_error(e.validate(), "unknown suite: thermal"));
  e.suites = {};
  CHECK(lists_error(e.validate(), "suites must not be empty"));

  EvalConfig blank;
  CHECK(lists_error(blank.validate(), "checkpoint must be set"));
  CHECK(lists_error(blank.validate(), "dataset_dir must be set"));

  CHECK_THROWS_WITH_AS(eval_config_from_json(R"({"images": 3})"),
                       doctest::Contains("unknown config key(s) in config: images"),
                       std::invalid_argument);
}
