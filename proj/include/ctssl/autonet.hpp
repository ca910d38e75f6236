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
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ctssl::autonet {

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of all trailing extents; for rank-2 tensors the column count.
  std::size_t cols() const noexcept { return cols_; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  bool all_finite() const;
  void fill(double v);

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class LayerKind { Affine, BatchNorm, LeakyRelu, Dropout };
enum class Mode { Train, Eval };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::Affine;
  std::size_t width_in = 0;
  std::size_t width_out = 0;
  double slope = 0.2;      // LeakyRelu
  double keep_prob = 1.0;  // Dropout
  bool shared = true;      // applied row-wise to every item of the batch
};

/// Master generator used for initialization and dropout masks. Draws are
/// made with explicit bit arithmetic so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// Deterministic child seed, so one master seed can fan out into
/// independent streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

struct Layer {
  LayerSpec spec;
  // Affine: weight [in, out], bias [1, out]. BatchNorm: weight = gamma,
  // bias = beta, both [1, width].
  Tensor weight;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;
};

struct Tape;

/// A fixed feed-forward stack of layers.
class LayerStack {
 public:
  static constexpr double kBatchNormEps = 1e-5;
  static constexpr double kBatchNormMomentum = 0.1;

  LayerStack() = default;
  explicit LayerStack(std::vector<LayerSpec> specs);

  /// affine -> batchnorm -> leaky relu for each width after the first.
  static LayerStack mlp(const std::vector<std::size_t>& widths, double slope, bool batchnorm);

  /// Uniform fan-in initialization: weights and biases in +-1/sqrt(in).
  void initialize(Rng& rng);
  void zero_parameters();

  std::size_t width_in() const;
  std::size_t width_out() const;

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Trainable tensors in a fixed order (per layer: weight then bias).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  /// Batchnorm layers act as identity on batches smaller than this.
  /// Zero (the default) keeps batchnorm on for every batch size.
  std::size_t batchnorm_min_batch = 0;

  std::uint64_t version() const noexcept { return version_; }
  void mark_updated() noexcept { ++version_; }

 private:
  std::vector<Layer> layers_;
  std::uint64_t version_ = 0;
};

/// Activations recorded by forward() for one backward() pass.
struct Tape {
  const LayerStack* owner = nullptr;
  std::uint64_t version = 0;
  Mode mode = Mode::Eval;
  std::vector<Tensor> inputs;        // input to each layer
  std::vector<Tensor> aux;           // xhat (batchnorm) or mask (dropout)
  std::vector<std::vector<double>> inv_std;
  std::vector<char> bypassed;        // batchnorm skipped for this batch
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

/// Runs the stack. Train mode draws dropout masks from `rng` and updates
/// batchnorm running statistics; eval mode is deterministic.
ForwardResult forward(LayerStack& stack, const Tensor& input, Mode mode, Rng& rng);
/// Eval-only forward on a const stack without a tape.
Tensor infer(const LayerStack& stack, const Tensor& input);

struct Gradients {
  std::vector<Tensor> params;  // aligned with LayerStack::parameters()
  Tensor input;
};

/// Reverse pass. Throws a usage error if the stack changed since forward().
Gradients backward(const LayerStack& stack, const Tape& tape, const Tensor& upstream);

/// Sign of every leaky relu input on the tape (1 where positive). Finite
/// difference checks compare patterns to detect steps that cross a kink.
std::vector<char> relu_pattern(const LayerStack& stack, const Tape& tape);

struct AdamState {
  std::uint64_t step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// Bias-corrected Adam update. Moments are allocated on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d input
};

/// Mean softmax cross-entropy. Labels are 1-based class ids in {1..cols}.
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Mean squared error over a [batch, 1] prediction.
LossResult mse(const Tensor& pred, std::span<const double> targets);
Tensor softmax(const Tensor& logits);

/// Row-wise mean over index groups: out[g] = mean(x[groups[g]]).
Tensor group_mean(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups);
Tensor group_mean_backward(const Tensor& upstream,
                           const std::vector<std::vector<std::size_t>>& groups,
                           std::size_t input_rows);

/// Affine map of a concatenated pair of rows, [x_a ; x_b] * W + b, evaluated
/// as x_a * W_first + x_b * W_second + b so per-row products are shared by
/// every pair touching that row.
struct PairAffine {
  Tensor weight_first;   // [width, out]
  Tensor weight_second;  // [width, out]
  Tensor bias;           // [1, out]

  PairAffine() = default;
  PairAffine(std::size_t width, std::size_t out);
  void initialize(Rng& rng);
  std::vector<Tensor*> parameters() { return {&weight_first, &weight_second, &bias}; }
  std::vector<const Tensor*> parameters() const {
    return {&weight_first, &weight_second, &bias};
  }
};

using IndexPair = std::pair<std::size_t, std::size_t>;

struct PairAffineCache {
  Tensor input;
  std::vector<IndexPair> pairs;
};

Tensor pair_affine_forward(const PairAffine& layer, const Tensor& x,
                           const std::vector<IndexPair>& pairs, PairAffineCache* cache);

struct PairAffineGrads {
  Tensor weight_first, weight_second, bias, input;
};

PairAffineGrads pair_affine_backward(const PairAffine& layer, const PairAffineCache& cache,
                                     const Tensor& upstream);

/// Named tensor container shared by checkpoints and embedding exports.
/// Binary layout, little-endian: "CTSA", u32 version, u64 + bytes of JSON
/// metadata, u64 entry count, then per entry u32 + name, u32 + kind,
/// i32 layer index, u32 rank, u64 extents, f64 values.
struct ArchiveEntry {
  std::string name;
  std::string kind;
  int layer_index = -1;
  Tensor tensor;
  bool operator==(const ArchiveEntry&) const = default;
};

struct TensorArchive {
  std::string metadata = "{}";
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(const std::string& name) const;
  bool operator==(const TensorArchive&) const = default;
};

std::string serialize(const TensorArchive& archive);
TensorArchive deserialize(const std::string& bytes);
void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

/// Appends every parameter and running statistic of `stack` under `prefix`.
void append_stack(TensorArchive& archive, const std::string& prefix, const LayerStack& stack);
/// Restores a stack of identical topology written by append_stack().
void restore_stack(const TensorArchive& archive, const std::string& prefix, LayerStack& stack);

}  // namespace ctssl::autonet
