// Copyright 2026 The nhlearn Authors
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
#include <cmath>
#include <limits>

#include "doctest.h"
#include "nhlearn/config.h"
#include "nhlearn/error.h"
#include "test_util.h"

namespace nhlearn {
namespace {

TEST_SUITE("config") {

TEST_CASE("defaults for both systems") {
  PipelineConfig u = DefaultConfig("unicycle");
  CHECK(u.data.trajectories == 20);
  CHECK(u.data.test_count == 500);
  CHECK(u.manifold.c_expected == 1);
  CHECK(u.metric.eps_fraction == 0.2);
  CHECK_NOTHROW(ValidateConfig(u));
  PipelineConfig q = DefaultConfig("quadrotor");
  CHECK(q.system == "quadrotor");
  CHECK(q.manifold.c_expected == 4);
  CHECK_NOTHROW(ValidateConfig(q));
  CHECK(BuildSystem(q)->state_dim() == 6);
  CHECK_THROWS_AS(DefaultConfig("bicycle"), ConfigError);
}

TEST_CASE("INI round trip") {
  for (const char* name : {"unicycle", "quadrotor"}) {
    PipelineConfig cfg = DefaultConfig(name);
    cfg.seed = 42;
    cfg.data.noise_std = 1e-3;
    cfg.metric.variant = InfoNceVariant::kWithPositive;
    cfg.models = {"sparse_gp", "projected"};
    cfg.sweep.noise_std = {0.0, 1e-3};
    cfg.sweep.lma_rows = {2, 4};
    cfg.control_bounds = {{-0.5, 0.5}, {-2.0, 2.0}};
    cfg.output_dir = "somewhere/else";
    const std::string text = WriteConfig(cfg);
    PipelineConfig back = ParseConfig(text);
    CHECK(WriteConfig(back) == text);
    CHECK(ConfigHash(back) == ConfigHash(cfg));
    CHECK(back.models == cfg.models);
    CHECK(back.output_dir == cfg.output_dir);
    CHECK(back.data.envelope.dims.size() == cfg.data.envelope.dims.size());
  }
}

TEST_CASE("partial files keep the system defaults") {
  PipelineConfig cfg = ParseConfig("[system]\nname = quadrotor\n[data]\ntrajectories = 7\n");
  PipelineConfig ref = DefaultConfig("quadrotor");
  ref.data.trajectories = 7;
  CHECK(WriteConfig(cfg) == WriteConfig(ref));
}

TEST_CASE("malformed input is rejected") {
  CHECK_THROWS_AS(ParseConfig("[data]\ntrajectorys = 3\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("[nonsense]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("[data]\ntrajectories = many\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("[data]\nstart_region = 0:1,2\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("[metric]\nvariant = sideways\n"), ConfigError);
  CHECK_THROWS_AS(ParseIntervals("1:0"), ConfigError);
  CHECK_THROWS_AS(LoadConfig("/nonexistent/nhlearn.ini"), ConfigError);
}

TEST_CASE("interval lists") {
  auto v = ParseIntervals("-1:1, -inf:inf,0.5:2");
  REQUIRE(v.size() == 3);
  CHECK(v[0].lo == -1.0);
  CHECK(v[1].lo == -std::numeric_limits<double>::infinity());
  CHECK(v[1].hi == std::numeric_limits<double>::infinity());
  CHECK(v[2].hi == 2.0);
  auto again = ParseIntervals(FormatIntervals(v));
  for (size_t i = 0; i < v.size(); ++i) {
    CHECK(again[i].lo == v[i].lo);
    CHECK(again[i].hi == v[i].hi);
  }
}

TEST_CASE("hash ignores bookkeeping only") {
  PipelineConfig a = DefaultConfig("unicycle");
  PipelineConfig b = a;
  b.output_dir = "elsewhere";
  b.seed = 9;
  b.eval_seeds = 10;
  b.models = {"full_gp"};
  CHECK(ConfigHash(a) == ConfigHash(b));
  b.gp.iterations += 1;
  CHECK(ConfigHash(a) != ConfigHash(b));
  PipelineConfig c = a;
  c.data.noise_std = 1e-3;
  CHECK(ConfigHash(a) != ConfigHash(c));
}

TEST_CASE("cross-field validation") {
  PipelineConfig cfg = DefaultConfig("unicycle");
  cfg.data.test_region = cfg.data.envelope;
  CHECK_THROWS_WITH_AS(ValidateConfig(cfg), doctest::Contains("ood_margin"),
                       ConfigError);
  cfg = DefaultConfig("unicycle");
  cfg.models = {"nope"};
  CHECK_THROWS_AS(ValidateConfig(cfg), ConfigError);
  cfg = DefaultConfig("unicycle");
  cfg.mask_threshold = 1.5;
  CHECK_THROWS_AS(ValidateConfig(cfg), ConfigError);
  cfg = DefaultConfig("unicycle");
  cfg.eval_seeds = 0;
  CHECK_THROWS_AS(ValidateConfig(cfg), ConfigError);
}

}  // TEST_SUITE

}  // namespace
}  // namespace nhlearn
