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

#include "ctssl/covertree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ctssl/error.hpp"

namespace ctssl {

double radius_at(double epsilon, int level) { return std::pow(epsilon, level); }

CoverTree::CoverTree(double epsilon, int top_level, std::string cloud_id,
                     std::vector<CoverNode> nodes)
    : epsilon_(epsilon),
      top_level_(top_level),
      bottom_level_(top_level),
      cloud_id_(std::move(cloud_id)),
      nodes_(std::move(nodes)) {
  for (const auto& n : nodes_) bottom_level_ = std::min(bottom_level_, n.level);
}

double CoverTree::radius(int level) const { return radius_at(epsilon_, level); }

int top_level_for(double diameter, double epsilon) {
  if (!(diameter > 0.0)) return 0;
  int i = static_cast<int>(std::ceil(std::log(diameter) / std::log(epsilon)));
  while (radius_at(epsilon, i) < diameter) ++i;
  while (radius_at(epsilon, i - 1) >= diameter) --i;
  return i;
}

double diameter(const PointCloud& cloud) {
  double best = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t j = i + 1; j < cloud.size(); ++j)
      best = std::max(best, distance(cloud.point(i), cloud.point(j)));
  return best;
}

CoverTree build_cover_tree(const PointCloud& cloud, double epsilon, int max_depth) {
  if (!(epsilon > 1.0)) fail(ErrorKind::Argument, "epsilon must exceed 1");
  if (max_depth < 1) fail(ErrorKind::Argument, "max_depth must be at least 1");
  if (cloud.size() == 0) fail(ErrorKind::Argument, "cannot index an empty cloud");

  const std::size_t n = cloud.size();
  const int top = top_level_for(diameter(cloud), epsilon);

  std::vector<CoverNode> nodes;
  nodes.push_back({0, 0, top, std::nullopt, {}, {}});
  std::vector<NodeId> above{0};

  // Each level starts from the centers of the level above and then admits, in
  // point order, every point farther than epsilon^level from all centers seen
  // so far. New centers hang off the nearest center one level up, which is
  // within epsilon^(level+1) because that level already covers every point.
  for (int level = top - 1; level >= top - max_depth; --level) {
    const double r = radius_at(epsilon, level);
    std::vector<NodeId> here;
    std::vector<char> is_center(n, 0);

    for (NodeId up : above) {
      const NodeId id = nodes.size();
      nodes.push_back({id, nodes[up].center_index, level, up, {}, {}});
      nodes[up].children.push_back(id);
      here.push_back(id);
      is_center[nodes[up].center_index] = 1;
    }

    for (std::size_t p = 0; p < n; ++p) {
      if (is_center[p]) continue;
      const auto pt = cloud.point(p);
      bool separated = true;
      for (NodeId c : here) {
        if (distance(pt, cloud.point(nodes[c].center_index)) <= r) {
          separated = false;
          break;
        }
      }
      if (!separated) continue;

      NodeId parent = above.front();
      double best = std::numeric_limits<double>::infinity();
      for (NodeId up : above) {
        const double dist = distance(pt, cloud.point(nodes[up].center_index));
        if (dist < best) {
          best = dist;
          parent = up;
        }
      }
      const NodeId id = nodes.size();
      nodes.push_back({id, p, level, parent, {}, {}});
      nodes[parent].children.push_back(id);
      here.push_back(id);
      is_center[p] = 1;
    }
    above = std::move(here);
  }

  for (auto& node : nodes) {
    const double r = radius_at(epsilon, node.level);
    const auto c = cloud.point(node.center_index);
    for (std::size_t p = 0; p < n; ++p)
      if (distance(cloud.point(p), c) <= r) node.member_points.push_back(p);
  }

  return CoverTree(epsilon, top, cloud.id(), std::move(nodes));
}

std::vector<LevelView> levels(const CoverTree& tree) {
  std::vector<LevelView> out;
  for (const auto& node : tree.nodes()) {
    if (node.level == tree.top_level()) continue;
    if (out.empty() || out.back().level != node.level) {
      // ids are level-ordered, so a new level always starts a new view
      out.push_back({node.level, {}});
    }
    out.back().nodes.push_back(&node);
  }
  return out;
}

const char* to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::Root: return "root";
    case Violation::Kind::Nesting: return "nesting";
    case Violation::Kind::Covering: return "covering";
    case Violation::Kind::Separation: return "separation";
    case Violation::Kind::LevelCovering: return "level-covering";
    case Violation::Kind::Members: return "members";
    case Violation::Kind::Structure: return "structure";
  }
  return "unknown";
}

std::size_t ValidationReport::count(Violation::Kind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate_invariants(const CoverTree& tree, const PointCloud& cloud) {
  using K = Violation::Kind;
  ValidationReport report;
  auto add = [&](K kind, std::vector<NodeId> ids, std::string detail) {
    report.violations.push_back({kind, std::move(ids), std::move(detail)});
  };

  const auto& nodes = tree.nodes();
  const std::size_t n = cloud.size();
  if (nodes.empty()) {
    add(K::Root, {}, "tree has no nodes");
    return report;
  }

  std::size_t roots = 0;
  for (const auto& node : nodes) {
    if (node.level == tree.top_level()) {
      ++roots;
      if (node.parent) add(K::Root, {node.id}, "root has a parent");
    }
  }
  if (roots != 1) add(K::Root, {}, std::to_string(roots) + " nodes at the top level");

  // Structural sanity first; later checks index through these fields.
  bool structure_ok = true;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& node = nodes[k];
    if (node.id != k || node.center_index >= n) {
      add(K::Structure, {k}, "bad id or center index");
      structure_ok = false;
      continue;
    }
    if (node.level != tree.top_level()) {
      if (!node.parent || *node.parent >= nodes.size()) {
        add(K::Structure, {node.id}, "missing parent");
        structure_ok = false;
        continue;
      }
      const auto& parent = nodes[*node.parent];
      if (parent.level != node.level + 1 ||
          std::find(parent.children.begin(), parent.children.end(), node.id) ==
              parent.children.end())
        add(K::Structure, {node.id, parent.id}, "parent/child link mismatch");
    }
    for (NodeId c : node.children)
      if (c >= nodes.size() || nodes[c].level != node.level - 1)
        add(K::Structure, {node.id, c}, "child level is not level - 1");
  }
  if (!structure_ok) return report;

  std::vector<std::vector<const CoverNode*>> by_level;
  for (int level = tree.top_level(); level >= tree.bottom_level(); --level) {
    by_level.emplace_back();
    for (const auto& node : nodes)
      if (node.level == level) by_level.back().push_back(&node);
  }

  // Nesting: every center above the bottom level reappears one level down.
  for (std::size_t li = 0; li + 1 < by_level.size(); ++li) {
    for (const CoverNode* node : by_level[li]) {
      const bool found = std::any_of(by_level[li + 1].begin(), by_level[li + 1].end(),
                                     [&](const CoverNode* c) {
                                       return c->center_index == node->center_index;
                                     });
      if (!found)
        add(K::Nesting, {node->id},
            "center " + std::to_string(node->center_index) + " missing at level " +
                std::to_string(node->level - 1));
    }
  }

  for (const auto& node : nodes) {
    if (!node.parent) continue;
    const auto& parent = nodes[*node.parent];
    const double dist = distance(cloud.point(node.center_index), cloud.point(parent.center_index));
    if (dist > tree.radius(parent.level))
      add(K::Covering, {node.id, parent.id}, "child outside its parent's ball");
  }

  for (const auto& level_nodes : by_level) {
    for (std::size_t a = 0; a < level_nodes.size(); ++a) {
      for (std::size_t b = a + 1; b < level_nodes.size(); ++b) {
        const double dist = distance(cloud.point(level_nodes[a]->center_index),
                                     cloud.point(level_nodes[b]->center_index));
        if (!(dist > tree.radius(level_nodes[a]->level)))
          add(K::Separation, {level_nodes[a]->id, level_nodes[b]->id}, "centers too close");
      }
    }
  }

  for (const auto& level_nodes : by_level) {
    if (level_nodes.empty()) continue;
    const double r = tree.radius(level_nodes.front()->level);
    for (std::size_t p = 0; p < n; ++p) {
      const bool covered =
          std::any_of(level_nodes.begin(), level_nodes.end(), [&](const CoverNode* c) {
            return distance(cloud.point(p), cloud.point(c->center_index)) <= r;
          });
      if (!covered)
        add(K::LevelCovering, {},
            "point " + std::to_string(p) + " uncovered at level " +
                std::to_string(level_nodes.front()->level));
    }
  }

  for (const auto& node : nodes) {
    std::vector<std::size_t> expect;
    const double r = tree.radius(node.level);
    for (std::size_t p = 0; p < n; ++p)
      if (distance(cloud.point(p), cloud.point(node.center_index)) <= r) expect.push_back(p);
    std::vector<std::size_t> got = node.member_points;
    std::sort(got.begin(), got.end());
    if (got != expect) add(K::Members, {node.id}, "member_points differ from the closed ball");
  }

  return report;
}

double estimate_expansion_constant(const PointCloud& cloud, std::size_t sample,
                                   std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (sample > n) fail(ErrorKind::Argument, "sample exceeds cloud size");
  const double diam = diameter(cloud);
  if (n < 2 || !(diam > 0.0)) return 1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(sample);

  double best = 1.0;
  std::vector<double> dists(n);
  for (std::size_t p : order) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < n; ++q) {
      dists[q] = distance(cloud.point(p), cloud.point(q));
      if (dists[q] > 0.0) nearest = std::min(nearest, dists[q]);
    }
    if (!std::isfinite(nearest)) continue;
    std::vector<double> sorted = dists;
    std::sort(sorted.begin(), sorted.end());
    auto count_within = [&](double r) {
      return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), r) - sorted.begin());
    };
    for (double r = diam / 2.0; r >= nearest; r /= 2.0)
      best = std::max(best, count_within(2.0 * r) / std::max(1.0, count_within(r)));
  }
  return best;
}

nlohmann::json to_json(const CoverTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : tree.nodes()) {
    nodes.push_back({{"id", node.id},
                     {"level", node.level},
                     {"center_index", node.center_index},
                     {"parent", node.parent ? nlohmann::json(*node.parent) : nlohmann::json()},
                     {"children", node.children},
                     {"member_points", node.member_points}});
  }
  nlohmann::json doc = {{"epsilon", tree.epsilon()},
                        {"top_level", tree.top_level()},
                        {"cloud", tree.cloud_id()},
                        {"nodes", std::move(nodes)}};
  if (tree.estimated_expansion_constant)
    doc["estimated_expansion_constant"] = *tree.estimated_expansion_constant;
  return doc;
}

CoverTree cover_tree_from_json(const nlohmann::json& doc) {
  try {
    std::vector<CoverNode> nodes;
    for (const auto& j : doc.at("nodes")) {
      CoverNode node;
      node.id = j.at("id").get<NodeId>();
      node.level = j.at("level").get<int>();
      node.center_index = j.at("center_index").get<std::size_t>();
      if (!j.at("parent").is_null()) node.parent = j.at("parent").get<NodeId>();
      node.children = j.at("children").get<std::vector<NodeId>>();
      node.member_points = j.at("member_points").get<std::vector<std::size_t>>();
      nodes.push_back(std::move(node));
    }
    CoverTree tree(doc.at("epsilon").get<double>(), doc.at("top_level").get<int>(),
                   doc.value("cloud", std::string()), std::move(nodes));
    if (doc.contains("estimated_expansion_constant"))
      tree.estimated_expansion_constant = doc["estimated_expansion_constant"].get<double>();
    return tree;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("cover tree json: ") + e.what());
  }
}

}  // namespace ctssl
