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
#include <span>
#include <string>
#include <vector>

#include "ctssl/autonet.hpp"
#include "ctssl/geometry.hpp"

namespace ctssl {

using autonet::Tensor;

enum class Pooling { Mean, MeanMax };

/// Cloud descriptor from per-point embeddings: the column mean, optionally
/// followed by the column max.
std::vector<double> pool_cloud(const Tensor& embeddings, Pooling mode);

struct CloudEmbedding {
  std::string cloud_id;
  std::vector<double> vector;
  int class_label = 0;
};

struct ProbeConfig {
  std::size_t epochs = 300;
  double lr = 0.01;
  std::uint64_t seed = 0;
  bool standardize = true;  // z-score features with support statistics
};

/// Softmax regression over frozen cloud descriptors.
struct LinearProbe {
  std::vector<int> classes;  // column c of the logits predicts classes[c]
  std::vector<double> shift;
  std::vector<double> scale;
  Tensor weight;  // [dim, classes]
  Tensor bias;    // [1, classes]

  int predict(std::span<const double> x) const;
};

LinearProbe train_linear_probe(const std::vector<CloudEmbedding>& support,
                               const ProbeConfig& config);

/// k-nearest-neighbour vote in Euclidean distance; ties go to the class
/// whose nearest member is closest.
struct KnnClassifier {
  std::size_t k = 1;
  std::vector<CloudEmbedding> support;

  int predict(std::span<const double> x) const;
};

struct Evaluation {
  double accuracy = 0.0;
  std::vector<int> classes;                         // row/column labels
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

Evaluation evaluate(const LinearProbe& probe, const std::vector<CloudEmbedding>& query);
Evaluation evaluate(const KnnClassifier& knn, const std::vector<CloudEmbedding>& query);

/// Per-object part-averaged IoU. Only parts from `parts` that occur in the
/// prediction or the truth contribute; an empty `parts` means "every label
/// seen in either". Returns 1 when no part contributes.
double miou(std::span<const int> predicted, std::span<const int> truth, std::span<const int> parts);

/// Mean silhouette over samples grouped by class label. Samples alone in
/// their class score 0, as do samples with a == b == 0.
double silhouette(const std::vector<std::vector<double>>& vectors, std::span<const int> labels);
double silhouette(const std::vector<CloudEmbedding>& embeddings);

/// Euclidean distances from row `anchor` to every row.
std::vector<double> feature_heatmap(const Tensor& embeddings, std::size_t anchor);
/// x,y,z,distance rows; clouds with fewer than three dimensions pad with 0.
std::string heatmap_csv(const PointCloud& cloud, const std::vector<double>& distances);

}  // namespace ctssl
