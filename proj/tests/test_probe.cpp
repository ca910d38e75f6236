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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ctssl/error.hpp"
#include "ctssl/probe.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ctssl;
using ctssl::testing::miou_oracle;
using ctssl::testing::silhouette_oracle;

namespace {

std::vector<CloudEmbedding> gaussian_blobs(std::size_t per_class, std::size_t classes,
                                           std::size_t dim, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  std::vector<CloudEmbedding> out;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      CloudEmbedding e{"c" + std::to_string(c) + "_" + std::to_string(i), {}, int(c) + 1};
      for (std::size_t k = 0; k < dim; ++k) e.vector.push_back((k == c ? 10.0 : 0.0) + n(rng));
      out.push_back(e);
    }
  return out;
}

}  // namespace

TEST_CASE("pooling examples") {
  const Tensor one({1, 3}, {1.0, -2.0, 3.0});
  CHECK(pool_cloud(one, Pooling::Mean) == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(pool_cloud(one, Pooling::MeanMax) == std::vector<double>{1.0, -2.0, 3.0, 1.0, -2.0, 3.0});
  const Tensor sym({2, 2}, {0.5, -1.5, -0.5, 1.5});
  CHECK(pool_cloud(sym, Pooling::Mean) == std::vector<double>{0.0, 0.0});

  autonet::Rng rng(1);
  Tensor e = Tensor::matrix(9, 4);
  for (auto& v : e.data()) v = rng.uniform(-1.0, 1.0);
  const auto pooled = pool_cloud(e, Pooling::MeanMax);
  REQUIRE(pooled.size() == 8);
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0, m = -1e9;
    for (std::size_t r = 0; r < 9; ++r) {
      s += e(r, c);
      m = std::max(m, e(r, c));
    }
    CHECK(pooled[c] == doctest::Approx(s / 9.0).epsilon(1e-15));
    CHECK(pooled[4 + c] == m);
  }
  CHECK_THROWS_AS(pool_cloud(Tensor::matrix(0, 4), Pooling::Mean), Error);
}

TEST_CASE("linear probe separates separable data") {
  const auto data = gaussian_blobs(5, 3, 4, 0.5, 2);
  ProbeConfig config;
  const auto probe = train_linear_probe(data, config);
  CHECK(probe.classes == std::vector<int>{1, 2, 3});
  const auto ev = evaluate(probe, data);
  CHECK(ev.accuracy == 1.0);
  const auto held_out = gaussian_blobs(20, 3, 4, 0.5, 3);
  CHECK(evaluate(probe, held_out).accuracy >= 0.95);
}

TEST_CASE("zero embeddings give the majority-class rate") {
  std::vector<CloudEmbedding> support;
  for (int i = 0; i < 5; ++i) support.push_back({"s" + std::to_string(i), {0.0, 0.0}, i < 3 ? 1 : 2});
  const auto probe = train_linear_probe(support, ProbeConfig{});
  CHECK(evaluate(probe, support).accuracy == doctest::Approx(0.6));
}

TEST_CASE("linear probe is deterministic and validates input") {
  const auto data = gaussian_blobs(4, 2, 3, 1.0, 4);
  ProbeConfig config;
  config.seed = 9;
  const auto a = train_linear_probe(data, config);
  const auto b = train_linear_probe(data, config);
  CHECK(a.weight == b.weight);
  CHECK(a.bias == b.bias);

  CHECK_THROWS_AS(train_linear_probe({}, config), Error);
  std::vector<CloudEmbedding> single{{"a", {1.0}, 1}, {"b", {2.0}, 1}};
  CHECK_THROWS_AS(train_linear_probe(single, config), Error);
  std::vector<CloudEmbedding> ragged{{"a", {1.0}, 1}, {"b", {2.0, 3.0}, 2}};
  CHECK_THROWS_AS(train_linear_probe(ragged, config), Error);
  const std::vector<double> wide{1.0, 2.0, 3.0, 4.0};
  CHECK_THROWS_AS(a.predict(wide), Error);
}

TEST_CASE("k-NN examples") {
  const auto data = gaussian_blobs(3, 4, 4, 0.3, 5);
  for (std::size_t k : {1u, 3u}) {
    KnnClassifier knn{k, data};
    CHECK(evaluate(knn, data).accuracy == 1.0);
  }
  KnnClassifier one{1, data};
  for (const auto& e : data) CHECK(one.predict(e.vector) == e.class_label);

  // Tie between two classes at k = 2 goes to the class of the nearest member.
  KnnClassifier tie{2, {{"a", {0.0}, 1}, {"b", {3.0}, 2}}};
  const std::vector<double> near_b{2.0};
  CHECK(tie.predict(near_b) == 2);
  const std::vector<double> near_a{1.0};
  CHECK(tie.predict(near_a) == 1);

  KnnClassifier empty{1, {}};
  CHECK_THROWS_AS(empty.predict(near_a), Error);
  CHECK_THROWS_AS(evaluate(one, {}), Error);
}

TEST_CASE("random labels score at chance") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> label(1, 5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto make = [&](std::size_t count) {
    std::vector<CloudEmbedding> out;
    for (std::size_t i = 0; i < count; ++i) {
      CloudEmbedding e{"x" + std::to_string(i), {}, label(rng)};
      for (int k = 0; k < 8; ++k) e.vector.push_back(n(rng));
      out.push_back(e);
    }
    return out;
  };
  const auto support = make(100);
  const auto query = make(4000);
  const auto probe = train_linear_probe(support, ProbeConfig{});
  CHECK(std::abs(evaluate(probe, query).accuracy - 0.2) <= 0.05);
  CHECK(std::abs(evaluate(KnnClassifier{1, support}, query).accuracy - 0.2) <= 0.05);
}

TEST_CASE("confusion rows sum to the per-class query counts") {
  const auto support = gaussian_blobs(3, 3, 3, 3.0, 7);
  const auto query = gaussian_blobs(7, 3, 3, 3.0, 8);
  const auto ev = evaluate(KnnClassifier{3, support}, query);
  REQUIRE(ev.classes == std::vector<int>{1, 2, 3});
  std::size_t diag = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(std::accumulate(ev.confusion[r].begin(), ev.confusion[r].end(), std::size_t{0}) == 7);
    diag += ev.confusion[r][r];
  }
  CHECK(ev.accuracy == doctest::Approx(double(diag) / 21.0));
  CHECK((ev.accuracy >= 0.0 && ev.accuracy <= 1.0));
}

TEST_CASE("mIoU examples") {
  const std::vector<int> t{1, 1, 2, 2};
  CHECK(miou(t, t, {}) == 1.0);
  const std::vector<int> swapped{2, 2, 1, 1};
  CHECK(miou(swapped, t, {}) == 0.0);
  const std::vector<int> parts{1, 2, 3};
  CHECK(miou(t, t, parts) == 1.0);  // part 3 absent everywhere: skipped
  const std::vector<int> none;
  CHECK(miou(none, none, {}) == 1.0);
  const std::vector<int> short_pred{1};
  CHECK_THROWS_AS(miou(short_pred, t, {}), Error);
}

TEST_CASE("mIoU matches a set-arithmetic oracle and is relabel invariant") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> part(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<int> pred(n), truth(n);
    for (auto& v : pred) v = part(rng);
    for (auto& v : truth) v = part(rng);
    const double m = miou(pred, truth, {});
    CHECK(m == doctest::Approx(miou_oracle(pred, truth)).epsilon(1e-12));
    // Bijective renaming of part ids on both sides.
    const int rename[] = {0, 7, 3, 9, 1};
    std::vector<int> p2(n), t2(n);
    for (std::size_t i = 0; i < n; ++i) {
      p2[i] = rename[pred[i]];
      t2[i] = rename[truth[i]];
    }
    CHECK(miou(p2, t2, {}) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("silhouette examples") {
  std::vector<std::vector<double>> v;
  std::vector<int> y;
  for (int i = 0; i < 10; ++i) {
    v.push_back({0.001 * i, 0.0});
    y.push_back(1);
    v.push_back({100.0 + 0.001 * i, 0.0});
    y.push_back(2);
  }
  CHECK(silhouette(v, y) > 0.95);

  const std::vector<std::vector<double>> same(6, {1.0, 2.0});
  const std::vector<int> labels{1, 1, 1, 2, 2, 2};
  CHECK(silhouette(same, labels) == 0.0);

  const std::vector<int> one_class{1, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(silhouette(same, one_class), Error);
  const std::vector<int> short_labels{1, 2};
  CHECK_THROWS_AS(silhouette(same, short_labels), Error);
}

TEST_CASE("silhouette matches the pairwise oracle and ignores isometries") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t count = 3 + rng() % 25, dim = 1 + rng() % 6;
    std::vector<std::vector<double>> v(count, std::vector<double>(dim));
    std::vector<int> y(count);
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& x : v[i]) x = n(rng);
      y[i] = 1 + int(rng() % 3);
    }
    y[0] = 1;
    y[1] = 2;
    const double s = silhouette(v, y);
    CHECK(std::abs(s - silhouette_oracle(v, y)) <= 1e-9);
    CHECK((s >= -1.0 && s <= 1.0));

    // Rotation in the first coordinate plane plus a translation.
    const double th = 0.3 + trial;
    auto w = v;
    for (auto& x : w) {
      if (dim >= 2) {
        const double a = x[0], b = x[1];
        x[0] = std::cos(th) * a - std::sin(th) * b;
        x[1] = std::sin(th) * a + std::cos(th) * b;
      }
      for (auto& c : x) c += 5.0;
    }
    CHECK(std::abs(silhouette(w, y) - s) <= 1e-9);
  }
}

TEST_CASE("heatmap distances") {
  autonet::Rng rng(11);
  Tensor e = Tensor::matrix(7, 5);
  for (auto& v : e.data()) v = rng.uniform(-1.0, 1.0);
  const auto d = feature_heatmap(e, 2);
  REQUIRE(d.size() == 7);
  CHECK(d[2] == 0.0);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(d[i] == doctest::Approx(testing::euclid(e.row(i).data(), e.row(2).data(), 5)).epsilon(1e-12));
  for (double v : feature_heatmap(Tensor::matrix(4, 3, 0.5), 0)) CHECK(v == 0.0);
  CHECK_THROWS_AS(feature_heatmap(e, 7), Error);

  const PointCloud cloud("h", 2, {0.0, 1.0, 2.0, 3.0});
  CHECK(heatmap_csv(cloud, {0.0, 0.5}) == "x,y,z,distance\n0,1,0,0\n2,3,0,0.5\n");
  CHECK_THROWS_AS(heatmap_csv(cloud, {0.0}), Error);
}
