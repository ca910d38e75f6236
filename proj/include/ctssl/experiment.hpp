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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctssl/geometry.hpp"
#include "ctssl/probe.hpp"
#include "ctssl/sslnet.hpp"

namespace ctssl {

/// Everything one experiment run depends on. Defaults follow the reference
/// training setup: epsilon 2.0, three levels, 200 epochs of 8 clouds, Adam
/// at 1e-3, equal task weights.
struct RunConfig {
  double epsilon = 2.0;
  int max_depth = 3;
  std::size_t way = 5;
  std::size_t shot = 10;
  std::size_t q_per_class = 20;
  std::size_t repetitions = 10;
  std::size_t epochs = 200;
  std::size_t batch_clouds = 8;
  double lr = 0.001;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  /// "C", "R", "C+R", or "none" (random-init control only).
  std::string ablation = "C+R";
  std::optional<std::size_t> subsample_points;
  std::size_t records_per_chunk = 0;

  std::size_t probe_epochs = 300;
  double probe_lr = 0.01;
  Pooling pooling = Pooling::Mean;

  SslConfig model;  // input_dim is taken from the data
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown ablation values are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);
void validate(const RunConfig& config);

/// Seeds of one episode, all derived from the episode seed.
struct EpisodeSeeds {
  std::uint64_t episode, init, train, probe, subsample;
};
EpisodeSeeds episode_seeds(std::uint64_t episode_seed);

struct EpisodeRow {
  std::uint64_t episode_seed = 0;
  std::size_t way = 0;
  std::size_t shot = 0;
  std::string method;
  double accuracy = 0.0;
  double silhouette = 0.0;  // query descriptors grouped by class
  bool operator==(const EpisodeRow&) const = default;
};

struct MethodSummary {
  std::string method;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over repetitions
  double silhouette_mean = 0.0;
  std::size_t reps = 0;
};

struct PipelineResult {
  std::vector<EpisodeRow> rows;
  std::vector<MethodSummary> summary;
  std::vector<std::vector<LossPoint>> loss_curves;  // one per episode
};

/// Per episode seed seed..seed+repetitions-1: sample, normalize, index the
/// support clouds, generate pretext labels, pretrain, embed, probe. A
/// random-init model with the same initialization seed is probed alongside.
/// Repetitions run on `threads` workers (0 = hardware concurrency); output
/// does not depend on the worker count.
PipelineResult run_pipeline(const RunConfig& config, const Manifest& manifest,
                            std::size_t threads = 0);

std::string method_name(const RunConfig& config, bool pretrained);
std::vector<MethodSummary> summarize(const std::vector<EpisodeRow>& rows);

std::string results_csv(const std::vector<EpisodeRow>& rows);
std::string summary_csv(const std::vector<MethodSummary>& summary);

struct SweepRow {
  double epsilon = 0.0;
  double accuracy = 0.0;
  double silhouette = 0.0;
};

std::vector<double> default_epsilon_grid();
std::vector<SweepRow> sweep_epsilon(const RunConfig& config, const Manifest& manifest,
                                    const std::vector<double>& grid);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Build identification baked in at configure time.
const char* version_string();

/// Reproducibility record written next to every run's outputs.
nlohmann::json run_record(const std::string& command, const RunConfig& config,
                          const std::filesystem::path& manifest,
                          const nlohmann::json& extra = nlohmann::json::object());

}  // namespace ctssl
