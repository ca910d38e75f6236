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

#include "ctssl/pretext.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctssl/error.hpp"

namespace ctssl {

int quadrant_of(std::span<const double> parent_center, std::span<const double> child_center) {
  if (parent_center.size() != child_center.size() || parent_center.size() < 2)
    fail(ErrorKind::Argument, "quadrant_of needs two vectors of equal dimension >= 2");
  const bool x_pos = child_center[0] - parent_center[0] >= 0.0;
  const bool y_pos = child_center[1] - parent_center[1] >= 0.0;
  if (x_pos) return y_pos ? 1 : 4;
  return y_pos ? 2 : 3;
}

std::vector<RegressionPair> gen_regression_pairs(const CoverTree& tree, const PointCloud& cloud) {
  std::vector<RegressionPair> out;
  for (const auto& lv : levels(tree)) {
    for (std::size_t a = 0; a < lv.nodes.size(); ++a) {
      for (std::size_t b = a + 1; b < lv.nodes.size(); ++b) {
        const CoverNode* first = lv.nodes[a];
        const CoverNode* second = lv.nodes[b];
        if (first->id > second->id) std::swap(first, second);
        out.push_back({lv.level, first->id, second->id,
                       distance(cloud.point(first->center_index),
                                cloud.point(second->center_index))});
      }
    }
  }
  return out;
}

std::vector<QuadrantPair> gen_quadrant_pairs(const CoverTree& tree, const PointCloud& cloud) {
  std::vector<QuadrantPair> out;
  for (const auto& node : tree.nodes()) {
    for (NodeId c : node.children) {
      const auto& child = tree.node(c);
      out.push_back({node.level, node.id, child.id,
                     quadrant_of(cloud.point(node.center_index), cloud.point(child.center_index))});
    }
  }
  return out;
}

PretextDataset gen_pretext(const CoverTree& tree, const PointCloud& cloud) {
  PretextDataset data;
  data.cloud_id = cloud.id();
  data.epsilon = tree.epsilon();
  for (const auto& lv : levels(tree)) data.levels_used.push_back(lv.level);
  data.regression_pairs = gen_regression_pairs(tree, cloud);
  data.quadrant_pairs = gen_quadrant_pairs(tree, cloud);
  return data;
}

std::vector<PretextRecord> to_records(const PretextDataset& data) {
  std::vector<PretextRecord> out;
  out.reserve(data.regression_pairs.size() + data.quadrant_pairs.size());
  for (const auto& p : data.regression_pairs)
    out.push_back({'R', data.cloud_id, p.level, p.node_a, p.node_b, p.distance});
  for (const auto& p : data.quadrant_pairs)
    out.push_back({'C', data.cloud_id, p.parent_level, p.parent, p.child,
                   static_cast<double>(p.quadrant)});
  return out;
}

std::string to_jsonl(const std::vector<PretextRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"task", std::string(1, r.task)},
                        {"cloud", r.cloud},
                        {"level", r.level},
                        {"a", r.a},
                        {"b", r.b}};
    if (r.task == 'C')
      j["label"] = static_cast<int>(r.label);
    else
      j["label"] = r.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PretextRecord> parse_jsonl(const std::string& text) {
  std::vector<PretextRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PretextRecord r;
      const auto task = j.at("task").get<std::string>();
      if (task != "R" && task != "C") fail(ErrorKind::Parse, "unknown task '" + task + "'");
      r.task = task[0];
      r.cloud = j.at("cloud").get<std::string>();
      r.level = j.at("level").get<int>();
      r.a = j.at("a").get<NodeId>();
      r.b = j.at("b").get<NodeId>();
      r.label = j.at("label").get<double>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, "pretext line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::vector<PretextRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << to_jsonl(records);
}

std::vector<PretextRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

}  // namespace ctssl
