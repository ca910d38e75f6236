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

#include "ctssl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "ctssl/error.hpp"

namespace ctssl {

std::vector<double> pool_cloud(const Tensor& embeddings, Pooling mode) {
  const std::size_t n = embeddings.rows(), w = embeddings.cols();
  if (n == 0) fail(ErrorKind::Argument, "cannot pool an empty embedding set");
  std::vector<double> mean(w, 0.0), mx(w, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      mean[c] += embeddings(r, c);
      mx[c] = std::max(mx[c], embeddings(r, c));
    }
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  if (mode == Pooling::MeanMax) mean.insert(mean.end(), mx.begin(), mx.end());
  return mean;
}

namespace {

std::vector<double> transform(const LinearProbe& p, std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - p.shift[k]) * p.scale[k];
  return out;
}

}  // namespace

int LinearProbe::predict(std::span<const double> x) const {
  if (x.size() != weight.rows()) fail(ErrorKind::Shape, "probe input width mismatch");
  const auto z = transform(*this, x);
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double s = bias.data()[c];
    for (std::size_t k = 0; k < z.size(); ++k) s += z[k] * weight(k, c);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return classes[best];
}

LinearProbe train_linear_probe(const std::vector<CloudEmbedding>& support,
                               const ProbeConfig& config) {
  if (support.empty()) fail(ErrorKind::Argument, "empty support set");
  std::set<int> label_set;
  for (const auto& e : support) label_set.insert(e.class_label);
  if (label_set.size() < 2) fail(ErrorKind::Argument, "linear probe needs at least two classes");

  const std::size_t dim = support.front().vector.size();
  for (const auto& e : support)
    if (e.vector.size() != dim) fail(ErrorKind::Shape, "support vectors differ in width");

  LinearProbe p;
  p.classes.assign(label_set.begin(), label_set.end());
  p.shift.assign(dim, 0.0);
  p.scale.assign(dim, 1.0);
  const double n = static_cast<double>(support.size());
  if (config.standardize) {
    for (const auto& e : support)
      for (std::size_t k = 0; k < dim; ++k) p.shift[k] += e.vector[k] / n;
    std::vector<double> var(dim, 0.0);
    for (const auto& e : support)
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = e.vector[k] - p.shift[k];
        var[k] += t * t / n;
      }
    for (std::size_t k = 0; k < dim; ++k) p.scale[k] = var[k] > 1e-24 ? 1.0 / std::sqrt(var[k]) : 0.0;
  }

  const std::size_t classes = p.classes.size();
  Tensor x = Tensor::matrix(support.size(), dim);
  std::vector<int> labels;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto z = transform(p, support[i].vector);
    std::copy(z.begin(), z.end(), x.ptr() + i * dim);
    const auto it = std::find(p.classes.begin(), p.classes.end(), support[i].class_label);
    labels.push_back(static_cast<int>(it - p.classes.begin()) + 1);
  }

  autonet::Rng rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
  p.weight = Tensor::matrix(dim, classes);
  for (auto& v : p.weight.data()) v = rng.uniform(-bound, bound) * 0.01;
  p.bias = Tensor::matrix(1, classes);

  autonet::AdamState adam;
  adam.lr = config.lr;
  std::vector<Tensor*> params{&p.weight, &p.bias};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tensor logits = Tensor::matrix(support.size(), classes);
    for (std::size_t i = 0; i < support.size(); ++i)
      for (std::size_t c = 0; c < classes; ++c) {
        double s = p.bias.data()[c];
        for (std::size_t k = 0; k < dim; ++k) s += x(i, k) * p.weight(k, c);
        logits(i, c) = s;
      }
    const auto loss = autonet::cross_entropy(logits, labels);
    std::vector<Tensor> grads{Tensor::matrix(dim, classes), Tensor::matrix(1, classes)};
    for (std::size_t i = 0; i < support.size(); ++i)
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = loss.grad(i, c);
        grads[1].data()[c] += g;
        for (std::size_t k = 0; k < dim; ++k) grads[0](k, c) += x(i, k) * g;
      }
    autonet::adam_step(params, grads, adam);
  }
  return p;
}

int KnnClassifier::predict(std::span<const double> x) const {
  if (support.empty()) fail(ErrorKind::Argument, "k-NN has no support examples");
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i].vector.size() != x.size()) fail(ErrorKind::Shape, "k-NN input width mismatch");
    order.emplace_back(distance(support[i].vector, x), i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t k = std::min(std::max<std::size_t>(this->k, 1), order.size());
  std::map<int, std::size_t> votes;
  std::map<int, double> nearest;
  for (std::size_t i = 0; i < k; ++i) {
    const int label = support[order[i].second].class_label;
    ++votes[label];
    nearest.try_emplace(label, order[i].first);
  }
  int best = support[order.front().second].class_label;
  for (const auto& [label, count] : votes) {
    const std::size_t best_count = votes[best];
    if (count > best_count || (count == best_count && nearest[label] < nearest[best])) best = label;
  }
  return best;
}

namespace {

template <typename Predict>
Evaluation run_evaluation(const std::vector<CloudEmbedding>& query, std::vector<int> classes,
                          Predict predict) {
  if (query.empty()) fail(ErrorKind::Argument, "empty query set");
  for (const auto& q : query)
    if (std::find(classes.begin(), classes.end(), q.class_label) == classes.end())
      classes.push_back(q.class_label);
  Evaluation ev;
  ev.classes = classes;
  ev.confusion.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  auto index = [&](int label) {
    return static_cast<std::size_t>(std::find(classes.begin(), classes.end(), label) -
                                    classes.begin());
  };
  std::size_t correct = 0;
  for (const auto& q : query) {
    const int guess = predict(q.vector);
    if (guess == q.class_label) ++correct;
    ++ev.confusion[index(q.class_label)][index(guess)];
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(query.size());
  return ev;
}

}  // namespace

Evaluation evaluate(const LinearProbe& probe, const std::vector<CloudEmbedding>& query) {
  return run_evaluation(query, probe.classes,
                        [&](const std::vector<double>& v) { return probe.predict(v); });
}

Evaluation evaluate(const KnnClassifier& knn, const std::vector<CloudEmbedding>& query) {
  std::vector<int> classes;
  for (const auto& s : knn.support)
    if (std::find(classes.begin(), classes.end(), s.class_label) == classes.end())
      classes.push_back(s.class_label);
  std::sort(classes.begin(), classes.end());
  return run_evaluation(query, classes,
                        [&](const std::vector<double>& v) { return knn.predict(v); });
}

double miou(std::span<const int> predicted, std::span<const int> truth, std::span<const int> parts) {
  if (predicted.size() != truth.size())
    fail(ErrorKind::Argument, "miou: " + std::to_string(predicted.size()) + " predictions for " +
                                  std::to_string(truth.size()) + " labels");
  std::set<int> candidates(parts.begin(), parts.end());
  if (candidates.empty()) {
    candidates.insert(predicted.begin(), predicted.end());
    candidates.insert(truth.begin(), truth.end());
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (int part : candidates) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == part, t = truth[i] == part;
      inter += (p && t) ? 1 : 0;
      uni += (p || t) ? 1 : 0;
    }
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++counted;
  }
  return counted == 0 ? 1.0 : sum / static_cast<double>(counted);
}

double silhouette(const std::vector<std::vector<double>>& vectors, std::span<const int> labels) {
  const std::size_t n = vectors.size();
  if (labels.size() != n) fail(ErrorKind::Argument, "silhouette: label count mismatch");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) fail(ErrorKind::Argument, "silhouette needs at least two classes");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] < 2) continue;
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[labels[j]] += distance(vectors[i], vectors[j]);
    const double a = sums[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sums)
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double silhouette(const std::vector<CloudEmbedding>& embeddings) {
  std::vector<std::vector<double>> vectors;
  std::vector<int> labels;
  for (const auto& e : embeddings) {
    vectors.push_back(e.vector);
    labels.push_back(e.class_label);
  }
  return silhouette(vectors, labels);
}

std::vector<double> feature_heatmap(const Tensor& embeddings, std::size_t anchor) {
  if (anchor >= embeddings.rows())
    fail(ErrorKind::Argument, "anchor " + std::to_string(anchor) + " out of range");
  std::vector<double> out(embeddings.rows());
  for (std::size_t r = 0; r < embeddings.rows(); ++r)
    out[r] = distance(embeddings.row(anchor), embeddings.row(r));
  return out;
}

std::string heatmap_csv(const PointCloud& cloud, const std::vector<double>& distances) {
  if (distances.size() != cloud.size()) fail(ErrorKind::Argument, "heatmap size mismatch");
  std::ostringstream out;
  out.precision(17);
  out << "x,y,z,distance\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (std::size_t k = 0; k < 3; ++k) out << (k < p.size() ? p[k] : 0.0) << ',';
    out << distances[i] << '\n';
  }
  return out.str();
}

}  // namespace ctssl
