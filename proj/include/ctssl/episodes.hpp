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
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctssl/geometry.hpp"

namespace ctssl {

struct EpisodeItem {
  std::string cloud_id;
  int class_label = 0;
  bool operator==(const EpisodeItem&) const = default;
};

/// An m-shot K'-way episode: `shot` support items per sampled class and a
/// disjoint query set with `q_per_class` items per class.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t q_per_class = 0;
  std::uint64_t seed = 0;
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;

  std::vector<int> classes() const;
  bool operator==(const Episode&) const = default;
};

/// Labeled collection the sampler draws from; ids must be unique.
using LabeledItems = std::vector<EpisodeItem>;

LabeledItems labeled_items(const Manifest& manifest);

Episode sample_episode(const LabeledItems& items, std::size_t way, std::size_t shot,
                       std::size_t q_per_class, std::uint64_t seed);

nlohmann::json to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& doc);

/// Rejects any cloud id outside an episode's support set. Pretraining runs
/// every pretext record through this before touching it.
class SupportGuard {
 public:
  explicit SupportGuard(const Episode& episode);
  explicit SupportGuard(std::set<std::string> ids) : ids_(std::move(ids)) {}

  bool allows(const std::string& cloud_id) const { return ids_.count(cloud_id) != 0; }
  /// Throws a usage error naming the offending id.
  void require(const std::string& cloud_id) const;

 private:
  std::set<std::string> ids_;
};

}  // namespace ctssl
