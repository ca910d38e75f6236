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
#include <fstream>
#include <functional>
#include <set>

#include "ctssl/error.hpp"
#include "ctssl/geometry.hpp"
#include "helpers.hpp"

using namespace ctssl;
using ctssl::testing::random_cloud;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Internal;
}

std::multiset<std::vector<double>> rows(const PointCloud& c) {
  std::multiset<std::vector<double>> out;
  for (std::size_t i = 0; i < c.size(); ++i) out.insert({c.point(i).begin(), c.point(i).end()});
  return out;
}

}  // namespace

TEST_CASE("parse_xyz reads points in file order") {
  const auto c = parse_xyz("0 0 0\n1 1 1\n", "two");
  CHECK(c.size() == 2);
  CHECK(c.dim() == 3);
  CHECK(c.point(1)[2] == 1.0);
  CHECK_FALSE(c.part_labels().has_value());
}

TEST_CASE("parse_xyz trailing integer is a part label") {
  const auto c = parse_xyz("0 0 0 5\n", "one");
  CHECK(c.size() == 1);
  CHECK(c.dim() == 3);
  REQUIRE(c.part_labels().has_value());
  CHECK(*c.part_labels() == std::vector<int>{5});
}

TEST_CASE("parse_xyz rejects ragged rows naming the line") {
  try {
    parse_xyz("0 0\n0 0 0\n", "ragged");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("parse_xyz skips comments and blank lines, rejects empty input") {
  const auto c = parse_xyz("# header\n\n0.5 0.25\n  # indented\n1 2\n", "c");
  CHECK(c.size() == 2);
  CHECK(c.dim() == 2);
  CHECK(kind_of([] { parse_xyz("# only comments\n\n", "e"); }) == ErrorKind::Data);
  CHECK(kind_of([] { parse_xyz("1 x 2\n", "bad"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_xyz("1\n", "one-d"); }) == ErrorKind::Parse);
}

TEST_CASE("load_xyz and save_xyz round-trip bit-exactly") {
  const auto dir = ctssl::testing::scratch_dir("geometry_io");
  const PointCloud c("p", 3, {0.1, 1.0 / 3.0, -2.5e-7, 4, 5, 6}, std::nullopt, std::vector<int>{2, 7});
  save_xyz(c, dir / "p.xyz");
  const auto back = load_xyz(dir / "p.xyz");
  CHECK(back.coords() == c.coords());
  CHECK(back.part_labels() == c.part_labels());
  CHECK(back.id() == "p");
  CHECK(kind_of([&] { load_xyz(dir / "missing.xyz"); }) == ErrorKind::Io);
}

TEST_CASE("manifest round-trip and entry resolution") {
  const auto dir = ctssl::testing::scratch_dir("geometry_manifest");
  std::filesystem::create_directories(dir / "sub");
  save_xyz(PointCloud("a", 2, {0, 0, 1, 1}), dir / "sub" / "a.xyz");
  Manifest m;
  m.entries = {{"sub/a.xyz", 3}};
  save_manifest(m, dir / "manifest.json");
  const auto back = load_manifest(dir / "manifest.json");
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].path == "sub/a.xyz");
  CHECK(back.entries[0].class_label == 3);
  const auto cloud = load_cloud(back, back.entries[0]);
  CHECK(cloud.id() == "sub/a.xyz");
  CHECK(cloud.class_label() == 3);
  CHECK(cloud.size() == 2);

  std::ofstream(dir / "bad.json") << R"({"path": "x"})";
  CHECK(kind_of([&] { load_manifest(dir / "bad.json"); }) == ErrorKind::Parse);
  std::ofstream(dir / "bad2.json") << R"([{"path": "x", "class": "one"}])";
  CHECK(kind_of([&] { load_manifest(dir / "bad2.json"); }) == ErrorKind::Parse);
}

TEST_CASE("normalize_unit_cube examples") {
  auto n1 = normalize_unit_cube(PointCloud("a", 3, {2, 2, 2, 4, 4, 4}));
  CHECK(n1.coords() == std::vector<double>{0, 0, 0, 1, 1, 1});
  auto n2 = normalize_unit_cube(PointCloud("b", 3, {0, 0, 0, 2, 1, 0}));
  CHECK(n2.coords() == std::vector<double>{0, 0, 0, 1, 0.5, 0});
  auto n3 = normalize_unit_cube(PointCloud("c", 3, {7, 7, 7}));
  CHECK(n3.coords() == std::vector<double>{0, 0, 0});
}

TEST_CASE("normalize_unit_cube keeps id and labels") {
  const PointCloud c("keep", 2, {1, 2, 3, 5}, 4, std::vector<int>{1, 2});
  const auto n = normalize_unit_cube(c);
  CHECK(n.id() == "keep");
  CHECK(n.class_label() == 4);
  CHECK(n.part_labels() == c.part_labels());
}

TEST_CASE("normalize_unit_cube: range, idempotence and distance ratios") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + trial * 3, d = 2 + trial % 4;
    std::vector<double> coords(n * d);
    for (auto& v : coords) v = u(rng);
    const PointCloud c("r", d, coords);
    const auto once = normalize_unit_cube(c);
    for (double v : once.coords()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const auto twice = normalize_unit_cube(once);
    for (std::size_t k = 0; k < coords.size(); ++k)
      CHECK(std::abs(twice.coords()[k] - once.coords()[k]) <= 1e-12);

    const double ref_raw = distance(c.point(0), c.point(1));
    const double ref_norm = distance(once.point(0), once.point(1));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double raw = distance(c.point(i), c.point(i + 1)) / ref_raw;
      const double norm = distance(once.point(i), once.point(i + 1)) / ref_norm;
      CHECK(std::abs(raw - norm) <= 1e-9 * std::max(1.0, std::abs(raw)));
    }
  }
}

TEST_CASE("distance is Euclidean and rejects mismatched dimensions") {
  const std::vector<double> a{0, 0, 0}, b{3, 4, 0}, c{1, 1};
  CHECK(distance(a, b) == 5.0);
  CHECK(kind_of([&] { distance(a, c); }) == ErrorKind::Shape);
}

TEST_CASE("subsample examples") {
  const auto c = random_cloud(1024, 3, 5);
  const auto full = subsample(c, 1024, 99);
  CHECK(rows(full) == rows(c));
  const auto s1 = subsample(c, 128, 7);
  const auto s2 = subsample(c, 128, 7);
  CHECK(s1.coords() == s2.coords());
  CHECK(s1.size() == 128);
  CHECK(kind_of([] { subsample(random_cloud(100, 3, 1), 128, 0); }) == ErrorKind::Argument);
  CHECK(kind_of([] { subsample(random_cloud(100, 3, 1), 0, 0); }) == ErrorKind::Argument);
}

TEST_CASE("subsample is a sub-multiset and keeps part labels with their points") {
  std::vector<double> coords;
  std::vector<int> parts;
  for (int i = 0; i < 300; ++i) {
    coords.insert(coords.end(), {double(i), double(i % 7), double(i % 3)});
    parts.push_back(i * 10);
  }
  const PointCloud c("lab", 3, coords, 2, parts);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = subsample(c, 37, seed);
    REQUIRE(s.part_labels().has_value());
    std::set<int> seen;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int idx = static_cast<int>(s.point(i)[0]);
      CHECK((*s.part_labels())[i] == idx * 10);
      CHECK(s.point(i)[1] == double(idx % 7));
      seen.insert(idx);
    }
    CHECK(seen.size() == 37);  // without replacement
    CHECK(s.class_label() == 2);
  }
  CHECK(subsample(c, 37, 1).coords() != subsample(c, 37, 2).coords());
}

TEST_CASE("PointCloud construction invariants") {
  CHECK(kind_of([] { PointCloud("x", 1, {1.0}); }) == ErrorKind::Argument);
  CHECK(kind_of([] { PointCloud("x", 3, {}); }) == ErrorKind::Data);
  CHECK(kind_of([] { PointCloud("x", 3, {1, 2}); }) == ErrorKind::Argument);
  CHECK(kind_of([] { PointCloud("x", 2, {1, 2}, std::nullopt, std::vector<int>{1, 2}); }) ==
        ErrorKind::Argument);
}
