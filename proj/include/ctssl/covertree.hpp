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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctssl/geometry.hpp"

namespace ctssl {

using NodeId = std::size_t;

struct CoverNode {
  NodeId id = 0;
  std::size_t center_index = 0;  // row in the indexed cloud
  int level = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  /// Every cloud point within the closed ball of radius epsilon^level.
  std::vector<std::size_t> member_points;

  bool operator==(const CoverNode&) const = default;
};

/// A leveled cover tree truncated to a fixed number of levels below the root.
///
/// Each level i holds a set of centers C_i such that
///  - C_i is contained in C_{i-1} (nesting),
///  - every child lies within epsilon^i of its parent at level i (covering),
///  - distinct centers of C_i are more than epsilon^i apart (separation),
///  - every cloud point is within epsilon^i of some center of C_i.
/// Node ids are assigned level by level from the root down, so ids at a
/// higher level are always smaller than ids at a lower level.
class CoverTree {
 public:
  CoverTree() = default;
  CoverTree(double epsilon, int top_level, std::string cloud_id, std::vector<CoverNode> nodes);

  double epsilon() const noexcept { return epsilon_; }
  int top_level() const noexcept { return top_level_; }
  int bottom_level() const noexcept { return bottom_level_; }
  const std::string& cloud_id() const noexcept { return cloud_id_; }
  const std::vector<CoverNode>& nodes() const noexcept { return nodes_; }
  const CoverNode& node(NodeId id) const { return nodes_.at(id); }
  const CoverNode& root() const { return nodes_.front(); }

  /// epsilon^level, computed the same way everywhere.
  double radius(int level) const;

  std::optional<double> estimated_expansion_constant;

  /// Mutable access for fault-injection tests and deserialization.
  std::vector<CoverNode>& mutable_nodes() noexcept { return nodes_; }

  bool operator==(const CoverTree& o) const {
    return epsilon_ == o.epsilon_ && top_level_ == o.top_level_ && cloud_id_ == o.cloud_id_ &&
           nodes_ == o.nodes_;
  }

 private:
  double epsilon_ = 2.0;
  int top_level_ = 0;
  int bottom_level_ = 0;
  std::string cloud_id_;
  std::vector<CoverNode> nodes_;
};

double radius_at(double epsilon, int level);

/// Smallest integer i with epsilon^i >= diameter (0 for a zero diameter).
int top_level_for(double diameter, double epsilon);

double diameter(const PointCloud& cloud);

/// Builds the tree with `max_depth` levels materialized below the root.
CoverTree build_cover_tree(const PointCloud& cloud, double epsilon, int max_depth = 3);

struct LevelView {
  int level = 0;
  std::vector<const CoverNode*> nodes;
};

/// Levels strictly below the root, highest first.
std::vector<LevelView> levels(const CoverTree& tree);

struct Violation {
  enum class Kind { Root, Nesting, Covering, Separation, LevelCovering, Members, Structure };
  Kind kind;
  std::vector<NodeId> nodes;
  std::string detail;
};

const char* to_string(Violation::Kind kind);

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
  std::size_t count(Violation::Kind kind) const;
};

/// Exhaustive check of every structural invariant against the cloud.
ValidationReport validate_invariants(const CoverTree& tree, const PointCloud& cloud);

/// Max over sampled points p and dyadic radii r of |B(p,2r)| / |B(p,r)|.
/// Radii run diameter/2, diameter/4, ... down to p's nearest-neighbour
/// distance, so every inner ball holds at least two points.
double estimate_expansion_constant(const PointCloud& cloud, std::size_t sample,
                                   std::uint64_t seed);

nlohmann::json to_json(const CoverTree& tree);
CoverTree cover_tree_from_json(const nlohmann::json& doc);

}  // namespace ctssl
