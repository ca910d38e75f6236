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
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctssl/autonet.hpp"
#include "ctssl/covertree.hpp"
#include "ctssl/episodes.hpp"
#include "ctssl/geometry.hpp"
#include "ctssl/pretext.hpp"

namespace ctssl {

using autonet::Tensor;

struct SslConfig {
  std::size_t input_dim = 3;
  std::vector<std::size_t> extractor_widths{32, 64, 128};
  std::vector<std::size_t> branch_widths{64, 128, 256};
  std::size_t head_hidden = 256;
  double slope = 0.2;
  double keep_prob = 0.5;
  bool batchnorm = true;
  /// Batchnorm becomes identity on batches smaller than this (0 = never).
  std::size_t batchnorm_min_batch = 0;

  std::size_t embedding_width() const { return extractor_widths.back(); }
  std::size_t branch_width() const { return branch_widths.back(); }
};

nlohmann::json to_json(const SslConfig& config);
SslConfig ssl_config_from_json(const nlohmann::json& doc);

/// Shared-MLP point feature extractor feeding two pair-classification
/// branches: quadrant classification (C) and distance regression (R).
///
/// Each branch maps ball vectors through its own shared MLP, concatenates the
/// two balls of a record (first-listed ball first) and runs a head
/// hidden -> batchnorm -> leaky relu -> dropout -> output.
class SslModel {
 public:
  SslModel() = default;
  explicit SslModel(SslConfig config);

  void initialize(std::uint64_t seed);
  void zero_parameters();

  const SslConfig& config() const noexcept { return config_; }

  autonet::LayerStack extractor;
  autonet::LayerStack branch_c;
  autonet::PairAffine head_c_pair;
  autonet::LayerStack head_c_tail;
  autonet::LayerStack branch_r;
  autonet::PairAffine head_r_pair;
  autonet::LayerStack head_r_tail;

  /// Every trainable tensor: extractor, C branch + head, R branch + head.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  /// Index ranges into parameters() for each part of the network.
  struct Ranges {
    std::size_t extractor_end, c_end, r_end;
  };
  Ranges ranges() const;

  void mark_updated();

 private:
  SslConfig config_;
};

/// A support cloud ready for pretraining: normalized points, its tree and
/// the pretext records generated from that tree.
struct PretextCloud {
  const PointCloud* cloud = nullptr;
  const CoverTree* tree = nullptr;
  std::vector<PretextRecord> records;
};

struct TaskMask {
  bool use_c = true;
  double lambda = 1.0;  // weight of L_R; zero disables the R branch entirely
  bool use_r() const { return lambda > 0.0; }
};

struct PretextForward {
  double loss_c = 0.0;
  double loss_r = 0.0;
  std::size_t count_c = 0;  // zero when the batch held no C records
  std::size_t count_r = 0;
  Tensor logits;  // [count_c, 4]
  Tensor preds;   // [count_r, 1]

  double combined(const TaskMask& mask) const {
    return (mask.use_c ? loss_c : 0.0) + mask.lambda * loss_r;
  }

  /// Leaky relu sign pattern across every stack that ran.
  std::vector<char> relu_pattern() const;

  struct Impl;
  std::shared_ptr<Impl> impl;  // recorded activations for pretext_backward()
};

/// Per-point embeddings [n, width], eval mode.
Tensor embed_points(const SslModel& model, const PointCloud& cloud);

/// Centroid of the member rows of `node`.
std::vector<double> ball_vector(const Tensor& embeddings, const CoverNode& node);

/// Forward pass over every record of every cloud in `batch`. Batchnorm
/// statistics span the whole batch (all points, all balls, all pairs).
PretextForward pretext_forward(SslModel& model, const std::vector<const PretextCloud*>& batch,
                               autonet::Mode mode, autonet::Rng& rng, const TaskMask& mask);

/// Gradients of combined(mask), aligned with SslModel::parameters().
std::vector<Tensor> pretext_backward(const SslModel& model, const PretextForward& fwd);

struct PretrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_clouds = 8;
  double lr = 0.001;
  double lambda = 1.0;
  bool use_c = true;
  std::uint64_t seed = 0;
  /// Records per optimizer step within a group (0 = the whole group). Larger
  /// groups are split into chunks whose gradients are accumulated.
  std::size_t records_per_chunk = 0;
};

struct LossPoint {
  std::size_t epoch = 0;
  double loss_c = 0.0;
  double loss_r = 0.0;
  double combined = 0.0;
  bool operator==(const LossPoint&) const = default;
};

struct PretrainResult {
  std::vector<LossPoint> curve;
  std::uint64_t steps = 0;
};

/// Trains on support clouds only: every cloud and record must pass `guard`.
PretrainResult pretrain(SslModel& model, const std::vector<PretextCloud>& clouds,
                        const SupportGuard& guard, const PretrainConfig& config);

std::string loss_curve_csv(const std::vector<LossPoint>& curve);

void save_model(const SslModel& model, const std::filesystem::path& path, std::uint64_t seed,
                std::uint64_t step);
struct LoadedModel {
  SslModel model;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& path);
autonet::TensorArchive model_archive(const SslModel& model, std::uint64_t seed, std::uint64_t step);
LoadedModel model_from_archive(const autonet::TensorArchive& archive);

/// Embedding export container: one entry per cloud id, kind "embedding".
autonet::TensorArchive export_embeddings(const SslModel& model,
                                         const std::vector<PointCloud>& clouds);

}  // namespace ctssl
