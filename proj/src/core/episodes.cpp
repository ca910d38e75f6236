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

#include "ctssl/episodes.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>

#include "ctssl/error.hpp"

namespace ctssl {

std::vector<int> Episode::classes() const {
  std::vector<int> out;
  for (const auto& item : support)
    if (std::find(out.begin(), out.end(), item.class_label) == out.end())
      out.push_back(item.class_label);
  return out;
}

LabeledItems labeled_items(const Manifest& manifest) {
  LabeledItems out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back({e.path, e.class_label});
  return out;
}

Episode sample_episode(const LabeledItems& items, std::size_t way, std::size_t shot,
                       std::size_t q_per_class, std::uint64_t seed) {
  if (way == 0 || shot == 0) fail(ErrorKind::Argument, "way and shot must be positive");

  std::map<int, std::vector<std::size_t>> by_class;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!ids.insert(items[i].cloud_id).second)
      fail(ErrorKind::Data, "cloud '" + items[i].cloud_id + "' is listed twice");
    by_class[items[i].class_label].push_back(i);
  }

  if (by_class.size() < way)
    fail(ErrorKind::Capacity, "episode needs " + std::to_string(way) + " classes, dataset has " +
                                  std::to_string(by_class.size()));

  const std::size_t need = shot + q_per_class;
  std::vector<int> eligible;
  for (const auto& [label, members] : by_class)
    if (members.size() >= need) eligible.push_back(label);
  if (eligible.size() < way) {
    std::string detail;
    for (const auto& [label, members] : by_class)
      if (members.size() < need)
        detail += " class " + std::to_string(label) + " has " + std::to_string(members.size()) + ";";
    fail(ErrorKind::Capacity, "episode needs " + std::to_string(need) +
                                  " examples in each of " + std::to_string(way) +
                                  " classes:" + detail);
  }

  // Classes short of shot + q_per_class examples are never drawn.
  std::mt19937_64 rng(seed);
  std::vector<int> classes = eligible;
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(way);

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.q_per_class = q_per_class;
  ep.seed = seed;
  for (int label : classes) {
    auto members = by_class[label];
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < shot; ++k) ep.support.push_back(items[members[k]]);
    for (std::size_t k = shot; k < need; ++k) ep.query.push_back(items[members[k]]);
  }
  return ep;
}

nlohmann::json to_json(const Episode& episode) {
  auto list = [](const std::vector<EpisodeItem>& items) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : items) arr.push_back({{"cloud", it.cloud_id}, {"class", it.class_label}});
    return arr;
  };
  return {{"way", episode.way},
          {"shot", episode.shot},
          {"q_per_class", episode.q_per_class},
          {"seed", episode.seed},
          {"support", list(episode.support)},
          {"query", list(episode.query)}};
}

Episode episode_from_json(const nlohmann::json& doc) {
  try {
    auto list = [](const nlohmann::json& arr) {
      std::vector<EpisodeItem> out;
      for (const auto& j : arr)
        out.push_back({j.at("cloud").get<std::string>(), j.at("class").get<int>()});
      return out;
    };
    Episode ep;
    ep.way = doc.at("way").get<std::size_t>();
    ep.shot = doc.at("shot").get<std::size_t>();
    ep.q_per_class = doc.value("q_per_class", std::size_t{0});
    ep.seed = doc.at("seed").get<std::uint64_t>();
    ep.support = list(doc.at("support"));
    ep.query = list(doc.at("query"));
    return ep;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("episode json: ") + e.what());
  }
}

SupportGuard::SupportGuard(const Episode& episode) {
  for (const auto& item : episode.support) ids_.insert(item.cloud_id);
}

void SupportGuard::require(const std::string& cloud_id) const {
  if (!allows(cloud_id))
    fail(ErrorKind::Usage, "cloud '" + cloud_id + "' is not in the episode's support set");
}

}  // namespace ctssl
