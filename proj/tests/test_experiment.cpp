// Copyright 2026 The ctssl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ctssl/error.hpp"
#include "ctssl/experiment.hpp"
#include "ctssl/synth.hpp"
#include "helpers.hpp"

using namespace ctssl;

namespace {

// A few small clouds per class, written once per process.
const Manifest& tiny_dataset() {
  static const Manifest manifest = [] {
    SynthOptions options;
    options.classes = 3;
    options.per_class = 6;
    options.points = 40;
    options.seed = 3;
    return synthesize(options, testing::scratch_dir("experiment_data"));
  }();
  return manifest;
}

RunConfig tiny_config() {
  RunConfig c;
  c.way = 2;
  c.shot = 2;
  c.q_per_class = 2;
  c.repetitions = 2;
  c.epochs = 2;
  c.probe_epochs = 20;
  c.model.extractor_widths = {8, 8};
  c.model.branch_widths = {8, 8};
  c.model.head_hidden = 8;
  return c;
}

}  // namespace

TEST_CASE("run config defaults follow the reference training setup") {
  const RunConfig c;
  CHECK(c.epsilon == 2.0);
  CHECK(c.max_depth == 3);
  CHECK(c.epochs == 200);
  CHECK(c.batch_clouds == 8);
  CHECK(c.lr == 0.001);
  CHECK(c.lambda == 1.0);
  CHECK(c.ablation == "C+R");
  CHECK(c.model.extractor_widths == std::vector<std::size_t>{32, 64, 128});
}

TEST_CASE("run config JSON round trip and validation") {
  RunConfig c = tiny_config();
  c.subsample_points = 16;
  c.pooling = Pooling::MeanMax;
  c.ablation = "R";
  c.seed = 99;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.subsample_points == 16);

  const RunConfig defaults = run_config_from_json(nlohmann::json::object());
  CHECK(to_json(defaults) == to_json(RunConfig{}));

  auto config_error = [](const char* text) {
    try {
      run_config_from_json(nlohmann::json::parse(text));
    } catch (const Error& e) {
      return e.kind() == ErrorKind::Config;
    }
    return false;
  };
  CHECK(config_error(R"({"ablation":"X"})"));
  CHECK(config_error(R"({"epsilon":1.0})"));
  CHECK(config_error(R"({"way":1})"));
  CHECK(config_error(R"({"pooling":"max"})"));
  CHECK(config_error(R"({"epochs":"many"})"));
  CHECK(config_error(R"({"ablation":"R","lambda":0})"));
  CHECK(config_error(R"({"subsample_points":0})"));
  CHECK(config_error(R"({"lr":0})"));
  CHECK(config_error(R"({"repetitions":0})"));
}

TEST_CASE("episode seeds are distinct streams") {
  const auto s = episode_seeds(4);
  CHECK(s.episode == 4);
  const std::vector<std::uint64_t> all{s.init, s.train, s.probe, s.subsample};
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) CHECK(all[i] != all[j]);
  CHECK(episode_seeds(5).init != s.init);
}

TEST_CASE("method names") {
  RunConfig c;
  CHECK(method_name(c, true) == "pretrained");
  CHECK(method_name(c, false) == "random-init");
  c.ablation = "C";
  CHECK(method_name(c, true) == "pretrained:C");
  CHECK(method_name(c, false) == "random-init");
  c.subsample_points = 128;
  CHECK(method_name(c, true) == "pretrained:C@128");
  CHECK(method_name(c, false) == "random-init@128");
}

TEST_CASE("pipeline emits one row per method and repetition") {
  const auto res = run_pipeline(tiny_config(), tiny_dataset(), 1);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].method == "pretrained");
  CHECK(res.rows[1].method == "random-init");
  CHECK(res.rows[2].episode_seed == 1);
  for (const auto& r : res.rows) {
    CHECK((r.accuracy >= 0.0 && r.accuracy <= 1.0));
    CHECK(std::isfinite(r.silhouette));
    CHECK(r.way == 2);
    CHECK(r.shot == 2);
  }
  REQUIRE(res.summary.size() == 2);
  CHECK(res.summary[0].reps == 2);
  REQUIRE(res.loss_curves.size() == 2);
  CHECK(res.loss_curves[0].size() == 2);
}

TEST_CASE("pipeline output does not depend on the worker count") {
  const auto a = run_pipeline(tiny_config(), tiny_dataset(), 1);
  const auto b = run_pipeline(tiny_config(), tiny_dataset(), 3);
  CHECK(a.rows == b.rows);
  CHECK(a.loss_curves == b.loss_curves);
  CHECK(results_csv(a.rows) == results_csv(b.rows));
}

TEST_CASE("zero pretraining epochs reproduce the random-init control") {
  RunConfig c = tiny_config();
  c.epochs = 0;
  const auto res = run_pipeline(c, tiny_dataset(), 1);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].accuracy == res.rows[1].accuracy);
  CHECK(res.rows[0].silhouette == res.rows[1].silhouette);
}

TEST_CASE("ablation and density variants label their rows") {
  RunConfig c = tiny_config();
  c.repetitions = 1;
  c.ablation = "none";
  auto res = run_pipeline(c, tiny_dataset(), 1);
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].method == "random-init");
  CHECK(res.loss_curves.empty());

  c.ablation = "C";
  res = run_pipeline(c, tiny_dataset(), 1);
  CHECK(res.rows[0].method == "pretrained:C");
  CHECK(res.loss_curves[0][0].loss_r == 0.0);

  c.ablation = "R";
  res = run_pipeline(c, tiny_dataset(), 1);
  CHECK(res.rows[0].method == "pretrained:R");
  CHECK(res.loss_curves[0][0].loss_c == 0.0);

  c.ablation = "C+R";
  c.subsample_points = 16;
  res = run_pipeline(c, tiny_dataset(), 1);
  CHECK(res.rows[0].method == "pretrained@16");
  CHECK(res.rows[1].method == "random-init@16");
}

TEST_CASE("stage errors name the stage") {
  Manifest broken = tiny_dataset();
  for (auto& e : broken.entries) e.path = "missing_" + e.path;
  try {
    run_pipeline(tiny_config(), broken, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).rfind("load: ", 0) == 0);
  }
  RunConfig c = tiny_config();
  c.way = 4;  // only three classes
  CHECK_THROWS_AS(run_pipeline(c, tiny_dataset(), 1), Error);
}

TEST_CASE("summary statistics") {
  const std::vector<EpisodeRow> rows{{0, 5, 1, "a", 0.5, 0.1},
                                     {0, 5, 1, "b", 0.2, 0.0},
                                     {1, 5, 1, "a", 0.7, 0.3},
                                     {2, 5, 1, "a", 0.9, 0.2}};
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].method == "a");
  CHECK(s[0].mean == doctest::Approx(0.7));
  CHECK(s[0].std == doctest::Approx(0.2));
  CHECK(s[0].silhouette_mean == doctest::Approx(0.2));
  CHECK(s[0].reps == 3);
  CHECK(s[1].std == 0.0);
  CHECK(results_csv({rows[1]}) == "episode_seed,way,shot,method,accuracy\n0,5,1,b,0.20000000000000001\n");
  CHECK(summary_csv({s[1]}) == "method,mean,std,silhouette,reps\nb,0.20000000000000001,0,0,1\n");
  CHECK(sweep_csv({{1.5, 0.25, -0.5}}) == "epsilon,accuracy,silhouette\n1.5,0.25,-0.5\n");
}

TEST_CASE("epsilon sweep emits one finite row per grid value") {
  RunConfig c = tiny_config();
  c.repetitions = 1;
  const auto rows = sweep_epsilon(c, tiny_dataset(), {1.5, 2.5});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].epsilon == 1.5);
  CHECK(rows[1].epsilon == 2.5);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.accuracy));
    CHECK(std::isfinite(r.silhouette));
  }
  CHECK(default_epsilon_grid() == std::vector<double>{1.5, 1.7, 2.0, 2.2, 2.5});
  CHECK_THROWS_AS(sweep_epsilon(c, tiny_dataset(), {}), Error);
  CHECK_THROWS_AS(sweep_epsilon(c, tiny_dataset(), {2.0, 1.0}), Error);
}

TEST_CASE("run record carries the config, seeds and version") {
  RunConfig c = tiny_config();
  c.seed = 7;
  const auto rec = run_record("pipeline", c, "data/manifest.json", {{"grid", {1.5}}});
  CHECK(rec["command"] == "pipeline");
  CHECK(rec["version"] == version_string());
  CHECK(std::string(version_string()).rfind("v", 0) == 0);
  CHECK(rec["config"] == to_json(c));
  REQUIRE(rec["seeds"].size() == 2);
  CHECK(rec["seeds"][1]["episode"] == 8);
  CHECK(rec["seeds"][1]["train"] == episode_seeds(8).train);
  CHECK(rec["grid"][0] == 1.5);
  CHECK(std::filesystem::path(rec["manifest"].get<std::string>()).is_absolute());
}
