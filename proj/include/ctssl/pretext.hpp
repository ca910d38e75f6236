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

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctssl/covertree.hpp"
#include "ctssl/geometry.hpp"

namespace ctssl {

/// Same-level center pair with its Euclidean distance (task R).
struct RegressionPair {
  int level = 0;
  NodeId node_a = 0;  // node_a < node_b
  NodeId node_b = 0;
  double distance = 0.0;
  bool operator==(const RegressionPair&) const = default;
};

/// Parent/child center pair with the quadrant of the child's offset (task C).
struct QuadrantPair {
  int parent_level = 0;
  NodeId parent = 0;
  NodeId child = 0;
  int quadrant = 1;  // 1..4
  bool operator==(const QuadrantPair&) const = default;
};

struct PretextDataset {
  std::string cloud_id;
  double epsilon = 0.0;
  std::vector<int> levels_used;
  std::vector<RegressionPair> regression_pairs;
  std::vector<QuadrantPair> quadrant_pairs;
};

/// Sign pattern of the first two offset coordinates:
/// (+,+)->1, (-,+)->2, (-,-)->3, (+,-)->4, with zero counted as non-negative.
int quadrant_of(std::span<const double> parent_center, std::span<const double> child_center);

std::vector<RegressionPair> gen_regression_pairs(const CoverTree& tree, const PointCloud& cloud);
std::vector<QuadrantPair> gen_quadrant_pairs(const CoverTree& tree, const PointCloud& cloud);
PretextDataset gen_pretext(const CoverTree& tree, const PointCloud& cloud);

/// One line of the JSON-lines interchange format.
struct PretextRecord {
  char task = 'R';  // 'R' or 'C'
  std::string cloud;
  int level = 0;
  NodeId a = 0;
  NodeId b = 0;
  double label = 0.0;
};

std::vector<PretextRecord> to_records(const PretextDataset& data);
std::string to_jsonl(const std::vector<PretextRecord>& records);
std::vector<PretextRecord> parse_jsonl(const std::string& text);

void save_jsonl(const std::vector<PretextRecord>& records, const std::filesystem::path& path);
std::vector<PretextRecord> load_jsonl(const std::filesystem::path& path);

}  // namespace ctssl
