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
#include "ctssl/episodes.hpp"
#include "ctssl/sslnet.hpp"
#include "ctssl/synth.hpp"
#include "helpers.hpp"
#include "pretext_fixture.hpp"

using namespace ctssl;
using ctssl::autonet::LayerKind;
using ctssl::autonet::Mode;
using ctssl::autonet::Rng;

namespace {

SslModel tiny_model(std::uint64_t seed) {
  SslConfig config;
  config.extractor_widths = {8, 12, 16};
  config.branch_widths = {8, 12, 16};
  config.head_hidden = 16;
  SslModel model(config);
  model.initialize(seed);
  return model;
}

SupportGuard guard_for(const testing::PretextFixture& f) {
  std::set<std::string> ids;
  for (const auto& c : f.clouds) ids.insert(c.id());
  return SupportGuard(ids);
}

std::vector<Tensor> snapshot(const SslModel& model) {
  std::vector<Tensor> out;
  for (const Tensor* p : model.parameters()) out.push_back(*p);
  return out;
}

}  // namespace

TEST_CASE("default model widths") {
  SslModel model{SslConfig{}};
  CHECK(model.extractor.width_in() == 3);
  CHECK(model.extractor.width_out() == 128);
  CHECK(model.branch_c.width_out() == 256);
  CHECK(model.branch_r.width_out() == 256);
  CHECK(model.head_c_pair.weight_first.rows() == 256);
  CHECK(model.head_c_pair.weight_first.cols() + 0 == 256);
  CHECK(model.head_c_tail.width_out() == 4);
  CHECK(model.head_r_tail.width_out() == 1);
  CHECK(model.parameters().size() == model.parameter_names().size());
}

TEST_CASE("model config survives JSON") {
  SslConfig config;
  config.extractor_widths = {4, 5};
  config.keep_prob = 0.7;
  config.batchnorm_min_batch = 3;
  const SslConfig back = ssl_config_from_json(to_json(config));
  CHECK(back.extractor_widths == config.extractor_widths);
  CHECK(back.keep_prob == 0.7);
  CHECK(back.batchnorm_min_batch == 3);
  CHECK_THROWS_AS(ssl_config_from_json(nlohmann::json::parse(R"({"keep_prob":"x"})")), Error);
  SslConfig empty;
  empty.extractor_widths.clear();
  CHECK_THROWS_AS(SslModel{empty}, Error);
}

TEST_CASE("all-zero model embeds every point as zero") {
  SslModel model{SslConfig{}};
  model.zero_parameters();
  const auto cloud = testing::random_cloud(20, 3, 1);
  const Tensor e = embed_points(model, cloud);
  CHECK(e.rows() == 20);
  CHECK(e.cols() == 128);
  for (double v : e.data()) CHECK(v == 0.0);
}

TEST_CASE("embeddings are pointwise and permutation equivariant") {
  SslModel model = tiny_model(3);
  const auto cloud = testing::random_cloud(12, 3, 2);
  std::vector<double> coords = cloud.coords();
  std::copy(coords.begin(), coords.begin() + 3, coords.begin() + 3);  // row 1 := row 0
  const PointCloud dup("d", 3, coords);
  const Tensor e = embed_points(model, dup);
  for (std::size_t c = 0; c < e.cols(); ++c) CHECK(e(0, c) == e(1, c));

  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < 12; ++i) perm[i] = (i * 5 + 3) % 12;
  std::vector<double> shuffled(coords.size());
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t k = 0; k < 3; ++k) shuffled[i * 3 + k] = coords[perm[i] * 3 + k];
  const Tensor ep = embed_points(model, PointCloud("p", 3, shuffled));
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < e.cols(); ++c) CHECK(ep(i, c) == e(perm[i], c));

  CHECK_THROWS_AS(embed_points(model, testing::random_cloud(4, 2, 1)), Error);
}

TEST_CASE("ball vectors are member centroids") {
  Rng rng(4);
  Tensor e = Tensor::matrix(6, 5);
  for (auto& v : e.data()) v = rng.uniform(-1.0, 1.0);
  CoverNode single;
  single.member_points = {3};
  const auto v1 = ball_vector(e, single);
  for (std::size_t c = 0; c < 5; ++c) CHECK(v1[c] == e(3, c));

  Tensor sym = Tensor::matrix(2, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    sym(0, c) = 0.25 * static_cast<double>(c + 1);
    sym(1, c) = -sym(0, c);
  }
  CoverNode both;
  both.member_points = {0, 1};
  for (double v : ball_vector(sym, both)) CHECK(v == 0.0);

  CoverNode many;
  many.member_points = {0, 2, 4, 5};
  const auto vm = ball_vector(e, many);
  for (std::size_t c = 0; c < 5; ++c) {
    const double mean = (e(0, c) + e(2, c) + e(4, c) + e(5, c)) / 4.0;
    CHECK(std::abs(vm[c] - mean) <= 1e-12);
  }
  CHECK_THROWS_AS(ball_vector(e, CoverNode{}), Error);
}

TEST_CASE("regression labels are symmetric in the pair") {
  const auto f = testing::make_fixture(1, 64, 5);
  for (const auto& p : gen_regression_pairs(f.trees[0], f.clouds[0])) {
    const auto a = f.clouds[0].point(f.trees[0].node(p.node_a).center_index);
    const auto b = f.clouds[0].point(f.trees[0].node(p.node_b).center_index);
    CHECK(distance(a, b) == distance(b, a));
    CHECK(distance(a, b) == p.distance);
  }
}

TEST_CASE("batch with only regression records reports an empty classification task") {
  auto f = testing::make_fixture(2, 48, 6);
  for (auto& item : f.items)
    std::erase_if(item.records, [](const PretextRecord& r) { return r.task == 'C'; });
  SslModel model = tiny_model(6);
  Rng rng(1);
  const auto fwd = pretext_forward(model, f.batch(), Mode::Train, rng, TaskMask{});
  CHECK(fwd.count_c == 0);
  CHECK(fwd.loss_c == 0.0);
  CHECK(fwd.count_r > 0);
  CHECK(fwd.logits.rows() == 0);
}

TEST_CASE("zero model predicts zero distances") {
  const auto f = testing::make_fixture(2, 48, 7);
  SslModel model = tiny_model(7);
  model.zero_parameters();
  Rng rng(1);
  const auto fwd = pretext_forward(model, f.batch(), Mode::Train, rng, TaskMask{});
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& item : f.items)
    for (const auto& r : item.records)
      if (r.task == 'R') {
        sum += r.label * r.label;
        ++n;
      }
  REQUIRE(n == fwd.count_r);
  CHECK(fwd.loss_r == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-12));
  CHECK(fwd.loss_c == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("malformed records are data errors") {
  auto f = testing::make_fixture(1, 32, 8);
  SslModel model = tiny_model(8);
  Rng rng(1);
  auto& recs = f.items[0].records;
  auto c = std::find_if(recs.begin(), recs.end(), [](const auto& r) { return r.task == 'C'; });
  REQUIRE(c != recs.end());
  const auto saved = *c;
  c->label = 5;
  CHECK_THROWS_AS(pretext_forward(model, f.batch(), Mode::Train, rng, TaskMask{}), Error);
  *c = saved;
  c->b = 100000;
  CHECK_THROWS_AS(pretext_forward(model, f.batch(), Mode::Train, rng, TaskMask{}), Error);
}

TEST_CASE("full pretext gradients match finite differences") {
  Rng rng(9);
  const TaskMask masks[] = {{true, 1.0}, {true, 0.0}, {false, 1.0}, {true, 0.5}};
  for (int trial = 0; trial < 4; ++trial) {
    CAPTURE(trial);
    const auto f = testing::make_fixture(1 + rng.below(3), 16 + rng.below(24), 50 + trial);
    SslModel model(testing::small_config(rng));
    model.initialize(rng.next());
    const auto result = testing::check_pretext_gradients(model, f, masks[trial], rng.next());
    CHECK(result.max_rel_error < 1e-4);
    CHECK(result.unchecked == 0);
  }
}

TEST_CASE("lambda zero leaves the regression side without gradient") {
  const auto f = testing::make_fixture(2, 48, 10);
  SslModel model = tiny_model(10);
  Rng rng(1);
  const TaskMask mask{true, 0.0};
  const auto fwd = pretext_forward(model, f.batch(), Mode::Train, rng, mask);
  CHECK(fwd.count_r == 0);
  const auto grads = pretext_backward(model, fwd);
  const auto ranges = model.ranges();
  for (std::size_t i = ranges.c_end; i < ranges.r_end; ++i)
    for (double v : grads[i].data()) CHECK(v == 0.0);
  bool any_c = false;
  for (std::size_t i = ranges.extractor_end; i < ranges.c_end; ++i)
    for (double v : grads[i].data()) any_c = any_c || v != 0.0;
  CHECK(any_c);
}

TEST_CASE("both tasks reach every extractor parameter") {
  const auto f = testing::make_fixture(3, 64, 11);
  SslModel model = tiny_model(11);
  Rng rng(1);
  const auto fwd = pretext_forward(model, f.batch(), Mode::Train, rng, TaskMask{});
  const auto grads = pretext_backward(model, fwd);
  const auto names = model.parameter_names();
  // An affine bias feeding batchnorm is cancelled by the mean subtraction, so
  // its gradient is zero by construction; every other entry must move.
  std::size_t t = 0;
  const auto& layers = model.extractor.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto kind = layers[i].spec.kind;
    if (kind != LayerKind::Affine && kind != LayerKind::BatchNorm) continue;
    const bool bias_before_bn = kind == LayerKind::Affine && i + 1 < layers.size() &&
                                layers[i + 1].spec.kind == LayerKind::BatchNorm;
    for (int part = 0; part < 2; ++part, ++t) {
      CAPTURE(names[t]);
      for (double v : grads[t].data()) {
        if (part == 1 && bias_before_bn)
          CHECK(std::abs(v) < 1e-12);
        else
          CHECK(v != 0.0);
      }
    }
  }
  CHECK(t == model.ranges().extractor_end);
}

TEST_CASE("pretraining overfits a single cloud") {
  autonet::Rng rng(12);
  const auto shape = sample_shape(Primitive::Cube, 128, 0.0, rng);
  const PointCloud cloud = normalize_unit_cube(PointCloud("cube", 3, shape.coords));
  const CoverTree tree = build_cover_tree(cloud, 2.0, 3);
  const std::vector<PretextCloud> clouds{{&cloud, &tree, to_records(gen_pretext(tree, cloud))}};
  SslModel model{SslConfig{}};
  model.initialize(12);
  PretrainConfig config;
  config.epochs = 50;
  config.seed = 12;
  const auto result = pretrain(model, clouds, SupportGuard(std::set<std::string>{"cube"}), config);
  REQUIRE(result.curve.size() == 50);
  MESSAGE("combined loss " << result.curve.front().combined << " -> "
                           << result.curve.back().combined);
  CHECK(result.curve.back().combined <= 0.5 * result.curve.front().combined);
  CHECK(result.steps == 50);
}

TEST_CASE("pretraining is deterministic for a seed") {
  const auto f = testing::make_fixture(5, 48, 13);
  PretrainConfig config;
  config.epochs = 3;
  config.batch_clouds = 2;
  config.seed = 77;
  auto run = [&](std::size_t chunk) {
    SslModel model = tiny_model(13);
    auto c = config;
    c.records_per_chunk = chunk;
    auto res = pretrain(model, f.items, guard_for(f), c);
    return std::make_pair(res.curve, snapshot(model));
  };
  const auto a = run(0), b = run(0);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first.size() == 3);
  // Three groups per epoch: 5 clouds in batches of 2.
  SslModel model = tiny_model(13);
  CHECK(pretrain(model, f.items, guard_for(f), config).steps == 9);
  // Chunked accumulation still trains.
  const auto chunked = run(40);
  CHECK(chunked.first.size() == 3);
  for (const auto& p : chunked.first) CHECK(std::isfinite(p.combined));
}

TEST_CASE("disabling classification leaves its parameters bit-unchanged") {
  const auto f = testing::make_fixture(3, 48, 14);
  SslModel model = tiny_model(14);
  const auto before = snapshot(model);
  const auto running = model.head_c_tail.layers()[1].running_mean;
  PretrainConfig config;
  config.epochs = 3;
  config.use_c = false;
  config.seed = 3;
  pretrain(model, f.items, guard_for(f), config);
  const auto after = snapshot(model);
  const auto ranges = model.ranges();
  for (std::size_t i = ranges.extractor_end; i < ranges.c_end; ++i) CHECK(after[i] == before[i]);
  CHECK(model.head_c_tail.layers()[1].running_mean == running);
  bool moved = false;
  for (std::size_t i = ranges.c_end; i < ranges.r_end; ++i) moved = moved || after[i] != before[i];
  CHECK(moved);
}

TEST_CASE("pretraining refuses clouds outside the support set") {
  const auto f = testing::make_fixture(2, 32, 15);
  SslModel model = tiny_model(15);
  PretrainConfig config;
  config.epochs = 1;
  try {
    pretrain(model, f.items, SupportGuard(std::set<std::string>{"c0"}), config);
    FAIL("expected a usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
    CHECK(std::string(e.what()).find("c1") != std::string::npos);
  }

  auto g = testing::make_fixture(2, 32, 15);
  g.items[0].records[0].cloud = "c1";
  CHECK_THROWS_AS(pretrain(model, g.items, guard_for(g), config), Error);
}

TEST_CASE("pretraining configuration errors") {
  auto f = testing::make_fixture(1, 32, 16);
  SslModel model = tiny_model(16);
  PretrainConfig config;
  config.epochs = 1;
  config.use_c = false;
  config.lambda = 0.0;
  CHECK_THROWS_AS(pretrain(model, f.items, guard_for(f), config), Error);
  config = PretrainConfig{};
  config.batch_clouds = 0;
  CHECK_THROWS_AS(pretrain(model, f.items, guard_for(f), config), Error);
  f.items[0].records.clear();
  try {
    pretrain(model, f.items, guard_for(f), PretrainConfig{});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("loss curve CSV") {
  const std::vector<LossPoint> curve{{1, 1.5, 0.25, 1.75}, {2, 1.0, 0.125, 1.125}};
  CHECK(loss_curve_csv(curve) == "epoch,loss_C,loss_R,combined\n1,1.5,0.25,1.75\n2,1,0.125,1.125\n");
}

TEST_CASE("checkpoints round-trip bit exactly") {
  const auto f = testing::make_fixture(2, 32, 17);
  SslModel model = tiny_model(17);
  PretrainConfig config;
  config.epochs = 2;
  pretrain(model, f.items, guard_for(f), config);
  const auto dir = testing::scratch_dir("checkpoint");
  save_model(model, dir / "m.bin", 17, 4);
  const auto loaded = load_model(dir / "m.bin");
  CHECK(loaded.seed == 17);
  CHECK(loaded.step == 4);
  CHECK(loaded.model.config().extractor_widths == model.config().extractor_widths);
  CHECK(snapshot(loaded.model) == snapshot(model));
  CHECK(loaded.model.head_c_tail.layers()[1].running_var ==
        model.head_c_tail.layers()[1].running_var);
  CHECK(embed_points(loaded.model, f.clouds[0]) == embed_points(model, f.clouds[0]));

  auto archive = model_archive(model, 1, 1);
  archive.entries.pop_back();
  CHECK_THROWS_AS(model_from_archive(archive), Error);
  autonet::TensorArchive foreign;
  CHECK_THROWS_AS(model_from_archive(foreign), Error);
}

TEST_CASE("embedding export") {
  const auto f = testing::make_fixture(3, 40, 18);
  SslModel model = tiny_model(18);
  const auto a = export_embeddings(model, f.clouds);
  REQUIRE(a.entries.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.entries[i].name == f.clouds[i].id());
    CHECK(a.entries[i].kind == "embedding");
    CHECK(a.entries[i].tensor.shape() == std::vector<std::size_t>{40, 16});
  }
  CHECK(export_embeddings(model, f.clouds) == a);
  const auto dir = testing::scratch_dir("export");
  autonet::save_archive(a, dir / "e.bin");
  CHECK(autonet::load_archive(dir / "e.bin") == a);
}
