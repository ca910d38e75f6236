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

#include "ctssl/autonet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "ctssl/error.hpp"

namespace ctssl::autonet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(const Tensor& t) {
  return ConstMapMat(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
MapMat view(Tensor& t) {
  return MapMat(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

std::size_t trailing(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), cols_(trailing(shape_)) {
  std::size_t n = 1;
  for (auto e : shape_) n *= e;
  data_.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), cols_(trailing(shape_)), data_(std::move(data)) {
  std::size_t n = 1;
  for (auto e : shape_) n *= e;
  if (n != data_.size())
    fail(ErrorKind::Shape, "tensor shape " + shape_string(shape_) + " does not match " +
                               std::to_string(data_.size()) + " values");
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Affine: return "affine";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::LeakyRelu: return "leakyrelu";
    case LayerKind::Dropout: return "dropout";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "affine") return LayerKind::Affine;
  if (s == "batchnorm") return LayerKind::BatchNorm;
  if (s == "leakyrelu") return LayerKind::LeakyRelu;
  if (s == "dropout") return LayerKind::Dropout;
  fail(ErrorKind::Parse, "unknown layer kind '" + s + "'");
}

std::size_t Rng::below(std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// LayerStack

LayerStack::LayerStack(std::vector<LayerSpec> specs) {
  std::size_t width = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& s = specs[i];
    if (s.kind != LayerKind::Affine) {
      if (s.width_in == 0) s.width_in = width;
      s.width_out = s.width_in;
    }
    if (i > 0 && s.width_in != width)
      fail(ErrorKind::Shape, "layer " + std::to_string(i) + ": expects width " +
                                 std::to_string(s.width_in) + ", previous layer emits " +
                                 std::to_string(width));
    if (s.kind == LayerKind::Dropout && !(s.keep_prob > 0.0 && s.keep_prob <= 1.0))
      fail(ErrorKind::Argument, "layer " + std::to_string(i) + ": keep_prob must be in (0, 1]");
    if (s.kind == LayerKind::LeakyRelu && s.slope < 0.0)
      fail(ErrorKind::Argument, "layer " + std::to_string(i) + ": negative slope");
    width = s.width_out;

    Layer layer{s, {}, {}, {}, {}};
    if (s.kind == LayerKind::Affine) {
      layer.weight = Tensor::matrix(s.width_in, s.width_out);
      layer.bias = Tensor::matrix(1, s.width_out);
    } else if (s.kind == LayerKind::BatchNorm) {
      layer.weight = Tensor::matrix(1, s.width_in, 1.0);
      layer.bias = Tensor::matrix(1, s.width_in);
      layer.running_mean = Tensor::matrix(1, s.width_in);
      layer.running_var = Tensor::matrix(1, s.width_in, 1.0);
    }
    layers_.push_back(std::move(layer));
  }
}

LayerStack LayerStack::mlp(const std::vector<std::size_t>& widths, double slope, bool batchnorm) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    specs.push_back({LayerKind::Affine, widths[i - 1], widths[i]});
    if (batchnorm) specs.push_back({LayerKind::BatchNorm, widths[i], widths[i]});
    specs.push_back({LayerKind::LeakyRelu, widths[i], widths[i], slope});
  }
  return LayerStack(std::move(specs));
}

void LayerStack::initialize(Rng& rng) {
  for (auto& layer : layers_) {
    if (layer.spec.kind != LayerKind::Affine) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.spec.width_in));
    for (auto& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    for (auto& b : layer.bias.data()) b = rng.uniform(-bound, bound);
  }
  mark_updated();
}

void LayerStack::zero_parameters() {
  for (auto* p : parameters()) p->fill(0.0);
  mark_updated();
}

std::size_t LayerStack::width_in() const {
  return layers_.empty() ? 0 : layers_.front().spec.width_in;
}
std::size_t LayerStack::width_out() const {
  return layers_.empty() ? 0 : layers_.back().spec.width_out;
}

std::vector<Tensor*> LayerStack::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::Affine || layer.spec.kind == LayerKind::BatchNorm) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Tensor*> LayerStack::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::Affine || layer.spec.kind == LayerKind::BatchNorm) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// forward / backward

namespace {

Tensor affine(const Layer& layer, const Tensor& x) {
  Tensor y = Tensor::matrix(x.rows(), layer.spec.width_out);
  view(y).noalias() = view(x) * view(layer.weight);
  view(y).rowwise() += view(layer.bias).row(0);
  return y;
}

Tensor leaky(const Tensor& x, double slope) {
  Tensor y = x;
  for (auto& v : y.data())
    if (!(v > 0.0)) v *= slope;
  return y;
}

// Normalizes with the given statistics; fills xhat.
Tensor normalize(const Layer& layer, const Tensor& x, const std::vector<double>& mean,
                 const std::vector<double>& inv_std, Tensor& xhat) {
  const std::size_t n = x.rows(), w = x.cols();
  xhat = Tensor::matrix(n, w);
  Tensor y = Tensor::matrix(n, w);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double h = (x(r, c) - mean[c]) * inv_std[c];
      xhat(r, c) = h;
      y(r, c) = layer.weight.data()[c] * h + layer.bias.data()[c];
    }
  }
  return y;
}

bool bn_bypassed(const LayerStack& stack, std::size_t rows) {
  return stack.batchnorm_min_batch > 0 && rows < stack.batchnorm_min_batch;
}

}  // namespace

ForwardResult forward(LayerStack& stack, const Tensor& input, Mode mode, Rng& rng) {
  if (stack.layers().empty()) return {input, Tape{&stack, stack.version(), mode, {}, {}, {}, {}}};
  if (input.shape().size() != 2 || input.cols() != stack.width_in())
    fail(ErrorKind::Shape, "layer 0: input shape " + shape_string(input.shape()) +
                               " does not match width " + std::to_string(stack.width_in()));

  ForwardResult res;
  Tape& tape = res.tape;
  tape.owner = &stack;
  tape.version = stack.version();
  tape.mode = mode;
  const std::size_t count = stack.layers().size();
  tape.inputs.reserve(count);
  tape.aux.resize(count);
  tape.inv_std.resize(count);
  tape.bypassed.assign(count, 0);

  Tensor x = input;
  for (std::size_t i = 0; i < count; ++i) {
    Layer& layer = stack.layers()[i];
    tape.inputs.push_back(x);
    switch (layer.spec.kind) {
      case LayerKind::Affine:
        x = affine(layer, x);
        break;
      case LayerKind::LeakyRelu:
        x = leaky(x, layer.spec.slope);
        break;
      case LayerKind::Dropout:
        if (mode == Mode::Train && layer.spec.keep_prob < 1.0) {
          Tensor mask(x.shape(), 0.0);
          const double keep = layer.spec.keep_prob;
          for (auto& m : mask.data()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) x.data()[k] *= mask.data()[k];
          tape.aux[i] = std::move(mask);
        }
        break;
      case LayerKind::BatchNorm: {
        const std::size_t n = x.rows(), w = x.cols();
        if (bn_bypassed(stack, n)) {
          tape.bypassed[i] = 1;
          break;
        }
        std::vector<double> mean(w, 0.0), inv(w, 0.0);
        if (mode == Mode::Train) {
          std::vector<double> var(w, 0.0);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) mean[c] += x(r, c);
          for (auto& m : mean) m /= static_cast<double>(n);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) {
              const double t = x(r, c) - mean[c];
              var[c] += t * t;
            }
          const double m = LayerStack::kBatchNormMomentum;
          for (std::size_t c = 0; c < w; ++c) {
            const double unbiased = n > 1 ? var[c] / static_cast<double>(n - 1) : 0.0;
            var[c] /= static_cast<double>(n);
            inv[c] = 1.0 / std::sqrt(var[c] + LayerStack::kBatchNormEps);
            layer.running_mean.data()[c] = (1.0 - m) * layer.running_mean.data()[c] + m * mean[c];
            layer.running_var.data()[c] = (1.0 - m) * layer.running_var.data()[c] + m * unbiased;
          }
        } else {
          for (std::size_t c = 0; c < w; ++c) {
            mean[c] = layer.running_mean.data()[c];
            inv[c] = 1.0 / std::sqrt(layer.running_var.data()[c] + LayerStack::kBatchNormEps);
          }
        }
        x = normalize(layer, x, mean, inv, tape.aux[i]);
        tape.inv_std[i] = std::move(inv);
        break;
      }
    }
  }
  res.output = std::move(x);
  return res;
}

Tensor infer(const LayerStack& stack, const Tensor& input) {
  if (stack.layers().empty()) return input;
  if (input.shape().size() != 2 || input.cols() != stack.width_in())
    fail(ErrorKind::Shape, "layer 0: input shape " + shape_string(input.shape()) +
                               " does not match width " + std::to_string(stack.width_in()));
  Tensor x = input;
  for (const Layer& layer : stack.layers()) {
    switch (layer.spec.kind) {
      case LayerKind::Affine: x = affine(layer, x); break;
      case LayerKind::LeakyRelu: x = leaky(x, layer.spec.slope); break;
      case LayerKind::Dropout: break;
      case LayerKind::BatchNorm: {
        if (bn_bypassed(stack, x.rows())) break;
        const std::size_t w = x.cols();
        std::vector<double> mean(w), inv(w);
        for (std::size_t c = 0; c < w; ++c) {
          mean[c] = layer.running_mean.data()[c];
          inv[c] = 1.0 / std::sqrt(layer.running_var.data()[c] + LayerStack::kBatchNormEps);
        }
        Tensor xhat;
        x = normalize(layer, x, mean, inv, xhat);
        break;
      }
    }
  }
  return x;
}

std::vector<char> relu_pattern(const LayerStack& stack, const Tape& tape) {
  std::vector<char> out;
  for (std::size_t k = 0; k < stack.layers().size() && k < tape.inputs.size(); ++k) {
    if (stack.layers()[k].spec.kind != LayerKind::LeakyRelu) continue;
    for (double v : tape.inputs[k].data()) out.push_back(v > 0.0 ? 1 : 0);
  }
  return out;
}

Gradients backward(const LayerStack& stack, const Tape& tape, const Tensor& upstream) {
  if (tape.owner != &stack || tape.version != stack.version())
    fail(ErrorKind::Usage, "stale tape: the stack changed since forward()");
  const std::size_t count = stack.layers().size();
  if (tape.inputs.size() != count) fail(ErrorKind::Usage, "tape does not match the stack");

  Gradients g;
  std::vector<Tensor> per_layer_w(count), per_layer_b(count);
  Tensor dy = upstream;
  if (count > 0 && (dy.rows() != tape.inputs.front().rows() ||
                    dy.cols() != stack.layers().back().spec.width_out))
    fail(ErrorKind::Shape, "upstream gradient shape " + shape_string(dy.shape()) +
                               " does not match the stack output");

  for (std::size_t k = count; k-- > 0;) {
    const Layer& layer = stack.layers()[k];
    const Tensor& x = tape.inputs[k];
    switch (layer.spec.kind) {
      case LayerKind::Affine: {
        Tensor dw = Tensor::matrix(layer.spec.width_in, layer.spec.width_out);
        view(dw).noalias() = view(x).transpose() * view(dy);
        Tensor db = Tensor::matrix(1, layer.spec.width_out);
        // Plain loop: Eigen's vectorized reductions peel by pointer alignment,
        // which makes the summation order vary between runs.
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t c = 0; c < dy.cols(); ++c) db.data()[c] += dy(r, c);
        Tensor dx = Tensor::matrix(x.rows(), layer.spec.width_in);
        view(dx).noalias() = view(dy) * view(layer.weight).transpose();
        per_layer_w[k] = std::move(dw);
        per_layer_b[k] = std::move(db);
        dy = std::move(dx);
        break;
      }
      case LayerKind::LeakyRelu: {
        for (std::size_t i = 0; i < dy.size(); ++i)
          if (!(x.data()[i] > 0.0)) dy.data()[i] *= layer.spec.slope;
        break;
      }
      case LayerKind::Dropout: {
        const Tensor& mask = tape.aux[k];
        if (mask.size() == dy.size())
          for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] *= mask.data()[i];
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t n = x.rows(), w = x.cols();
        Tensor dgamma = Tensor::matrix(1, w), dbeta = Tensor::matrix(1, w);
        if (tape.bypassed[k]) {
          per_layer_w[k] = std::move(dgamma);
          per_layer_b[k] = std::move(dbeta);
          break;
        }
        const Tensor& xhat = tape.aux[k];
        const auto& inv = tape.inv_std[k];
        std::vector<double> sum_dh(w, 0.0), sum_dh_h(w, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            const double g_out = dy(r, c);
            dgamma.data()[c] += g_out * xhat(r, c);
            dbeta.data()[c] += g_out;
            const double dh = g_out * layer.weight.data()[c];
            sum_dh[c] += dh;
            sum_dh_h[c] += dh * xhat(r, c);
          }
        }
        const double nd = static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            const double dh = dy(r, c) * layer.weight.data()[c];
            if (tape.mode == Mode::Train)
              dy(r, c) = inv[c] / nd * (nd * dh - sum_dh[c] - xhat(r, c) * sum_dh_h[c]);
            else
              dy(r, c) = dh * inv[c];
          }
        }
        per_layer_w[k] = std::move(dgamma);
        per_layer_b[k] = std::move(dbeta);
        break;
      }
    }
  }

  for (std::size_t k = 0; k < count; ++k) {
    const auto kind = stack.layers()[k].spec.kind;
    if (kind == LayerKind::Affine || kind == LayerKind::BatchNorm) {
      g.params.push_back(std::move(per_layer_w[k]));
      g.params.push_back(std::move(per_layer_b[k]));
    }
  }
  g.input = std::move(dy);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size())
    fail(ErrorKind::Shape, "adam: " + std::to_string(params.size()) + " parameters but " +
                               std::to_string(grads.size()) + " gradients");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    fail(ErrorKind::Shape, "adam: optimizer state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape())
      fail(ErrorKind::Shape, "adam: shape mismatch at parameter " + std::to_string(i));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data();
    const auto& g = grads[i].data();
    auto& m = state.first_moment[i].data();
    auto& v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_hat);
    }
  }
}

// ---------------------------------------------------------------------------
// losses

Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t k = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double* row = out.ptr() + r * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < k; ++c) row[c] /= sum;
  }
  return out;
}

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows(), k = logits.cols();
  if (labels.size() != n)
    fail(ErrorKind::Shape, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(n) + " rows");
  LossResult res;
  res.grad = softmax(logits);
  if (n == 0) return res;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label < 1 || static_cast<std::size_t>(label) > k)
      fail(ErrorKind::Argument, "cross_entropy: label " + std::to_string(label) +
                                    " outside 1.." + std::to_string(k));
    const std::size_t c = static_cast<std::size_t>(label - 1);
    // log-sum-exp form keeps tiny residuals exact
    const double* row = logits.ptr() + r * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    res.value += (std::log(sum) + mx - row[c]) * scale;
    res.grad(r, c) -= 1.0;
  }
  for (auto& v : res.grad.data()) v *= scale;
  return res;
}

LossResult mse(const Tensor& pred, std::span<const double> targets) {
  const std::size_t n = pred.rows();
  if (targets.size() != n || (n > 0 && pred.cols() != 1))
    fail(ErrorKind::Shape, "mse: prediction " + shape_string(pred.shape()) + " vs " +
                               std::to_string(targets.size()) + " targets");
  LossResult res;
  res.grad = Tensor(pred.shape(), 0.0);
  if (n == 0) return res;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double diff = pred.data()[r] - targets[r];
    res.value += diff * diff * scale;
    res.grad.data()[r] = 2.0 * diff * scale;
  }
  return res;
}

// ---------------------------------------------------------------------------
// pooling and pair ops

Tensor group_mean(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups) {
  const std::size_t w = x.cols();
  Tensor out = Tensor::matrix(groups.size(), w);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) fail(ErrorKind::Internal, "group_mean: empty group " + std::to_string(g));
    double* dst = out.ptr() + g * w;
    for (std::size_t r : groups[g]) {
      if (r >= x.rows()) fail(ErrorKind::Internal, "group_mean: row index out of range");
      const double* src = x.ptr() + r * w;
      for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(groups[g].size());
    for (std::size_t c = 0; c < w; ++c) dst[c] *= inv;
  }
  return out;
}

Tensor group_mean_backward(const Tensor& upstream,
                           const std::vector<std::vector<std::size_t>>& groups,
                           std::size_t input_rows) {
  const std::size_t w = upstream.cols();
  Tensor dx = Tensor::matrix(input_rows, w);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double inv = 1.0 / static_cast<double>(groups[g].size());
    const double* src = upstream.ptr() + g * w;
    for (std::size_t r : groups[g]) {
      double* dst = dx.ptr() + r * w;
      for (std::size_t c = 0; c < w; ++c) dst[c] += src[c] * inv;
    }
  }
  return dx;
}

PairAffine::PairAffine(std::size_t width, std::size_t out)
    : weight_first(Tensor::matrix(width, out)),
      weight_second(Tensor::matrix(width, out)),
      bias(Tensor::matrix(1, out)) {}

void PairAffine::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(weight_first.rows()));
  for (auto* t : parameters())
    for (auto& v : t->data()) v = rng.uniform(-bound, bound);
}

Tensor pair_affine_forward(const PairAffine& layer, const Tensor& x,
                           const std::vector<IndexPair>& pairs, PairAffineCache* cache) {
  const std::size_t out_w = layer.bias.cols();
  if (x.cols() != layer.weight_first.rows())
    fail(ErrorKind::Shape, "pair affine: input width " + std::to_string(x.cols()) +
                               " does not match " + std::to_string(layer.weight_first.rows()));
  Tensor first = Tensor::matrix(x.rows(), out_w), second = Tensor::matrix(x.rows(), out_w);
  view(first).noalias() = view(x) * view(layer.weight_first);
  view(second).noalias() = view(x) * view(layer.weight_second);
  Tensor z = Tensor::matrix(pairs.size(), out_w);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    if (a >= x.rows() || b >= x.rows()) fail(ErrorKind::Internal, "pair affine: index out of range");
    double* dst = z.ptr() + p * out_w;
    const double* fa = first.ptr() + a * out_w;
    const double* sb = second.ptr() + b * out_w;
    for (std::size_t c = 0; c < out_w; ++c) dst[c] = fa[c] + sb[c] + layer.bias.data()[c];
  }
  if (cache) {
    cache->input = x;
    cache->pairs = pairs;
  }
  return z;
}

PairAffineGrads pair_affine_backward(const PairAffine& layer, const PairAffineCache& cache,
                                     const Tensor& upstream) {
  const std::size_t out_w = layer.bias.cols();
  const Tensor& x = cache.input;
  Tensor d_first = Tensor::matrix(x.rows(), out_w), d_second = Tensor::matrix(x.rows(), out_w);
  PairAffineGrads g;
  g.bias = Tensor::matrix(1, out_w);
  for (std::size_t p = 0; p < cache.pairs.size(); ++p) {
    const auto [a, b] = cache.pairs[p];
    const double* src = upstream.ptr() + p * out_w;
    double* fa = d_first.ptr() + a * out_w;
    double* sb = d_second.ptr() + b * out_w;
    for (std::size_t c = 0; c < out_w; ++c) {
      fa[c] += src[c];
      sb[c] += src[c];
      g.bias.data()[c] += src[c];
    }
  }
  g.weight_first = Tensor(layer.weight_first.shape(), 0.0);
  g.weight_second = Tensor(layer.weight_second.shape(), 0.0);
  view(g.weight_first).noalias() = view(x).transpose() * view(d_first);
  view(g.weight_second).noalias() = view(x).transpose() * view(d_second);
  g.input = Tensor::matrix(x.rows(), x.cols());
  view(g.input).noalias() = view(d_first) * view(layer.weight_first).transpose();
  view(g.input).noalias() += view(d_second) * view(layer.weight_second).transpose();
  return g;
}

// ---------------------------------------------------------------------------
// archive

static_assert(std::endian::native == std::endian::little,
              "tensor archives are written in host order, which must be little-endian");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s, bool wide) {
  if (wide)
    put<std::uint64_t>(out, s.size());
  else
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::Parse, "tensor archive truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'C', 'T', 'S', 'A'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

const ArchiveEntry* TensorArchive::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::string serialize(const TensorArchive& archive) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put_string(out, archive.metadata, true);
  put<std::uint64_t>(out, archive.entries.size());
  for (const auto& e : archive.entries) {
    put_string(out, e.name, false);
    put_string(out, e.kind, false);
    put<std::int32_t>(out, e.layer_index);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.shape().size()));
    for (auto extent : e.tensor.shape()) put<std::uint64_t>(out, extent);
    out.append(reinterpret_cast<const char*>(e.tensor.ptr()), e.tensor.size() * sizeof(double));
  }
  return out;
}

TensorArchive deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_string(4) != std::string(kMagic, 4)) fail(ErrorKind::Parse, "not a tensor archive");
  if (in.get<std::uint32_t>() != kVersion) fail(ErrorKind::Parse, "unsupported archive version");
  TensorArchive archive;
  archive.metadata = in.get_string(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = in.get_string(in.get<std::uint32_t>());
    e.kind = in.get_string(in.get<std::uint32_t>());
    e.layer_index = in.get<std::int32_t>();
    const auto rank = in.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& extent : shape) {
      extent = in.get<std::uint64_t>();
      n *= extent;
    }
    std::vector<double> values(n);
    const std::string raw = in.get_string(n * sizeof(double));
    std::memcpy(values.data(), raw.data(), raw.size());
    e.tensor = Tensor(std::move(shape), std::move(values));
    archive.entries.push_back(std::move(e));
  }
  if (!in.done()) fail(ErrorKind::Parse, "trailing bytes after tensor archive");
  return archive;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  const std::string bytes = serialize(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void append_stack(TensorArchive& archive, const std::string& prefix, const LayerStack& stack) {
  for (std::size_t i = 0; i < stack.layers().size(); ++i) {
    const Layer& layer = stack.layers()[i];
    const std::string base = prefix + "." + std::to_string(i) + ".";
    const std::string kind = to_string(layer.spec.kind);
    const int idx = static_cast<int>(i);
    if (layer.spec.kind == LayerKind::Affine) {
      archive.entries.push_back({base + "weight", kind, idx, layer.weight});
      archive.entries.push_back({base + "bias", kind, idx, layer.bias});
    } else if (layer.spec.kind == LayerKind::BatchNorm) {
      archive.entries.push_back({base + "gamma", kind, idx, layer.weight});
      archive.entries.push_back({base + "beta", kind, idx, layer.bias});
      archive.entries.push_back({base + "running_mean", kind, idx, layer.running_mean});
      archive.entries.push_back({base + "running_var", kind, idx, layer.running_var});
    }
  }
}

void restore_stack(const TensorArchive& archive, const std::string& prefix, LayerStack& stack) {
  auto load = [&](const std::string& name, Tensor& into) {
    const ArchiveEntry* e = archive.find(name);
    if (!e) fail(ErrorKind::Parse, "checkpoint is missing '" + name + "'");
    if (e->tensor.shape() != into.shape())
      fail(ErrorKind::Shape, "checkpoint entry '" + name + "' has shape " +
                                 shape_string(e->tensor.shape()) + ", expected " +
                                 shape_string(into.shape()));
    into = e->tensor;
  };
  for (std::size_t i = 0; i < stack.layers().size(); ++i) {
    Layer& layer = stack.layers()[i];
    const std::string base = prefix + "." + std::to_string(i) + ".";
    if (layer.spec.kind == LayerKind::Affine) {
      load(base + "weight", layer.weight);
      load(base + "bias", layer.bias);
    } else if (layer.spec.kind == LayerKind::BatchNorm) {
      load(base + "gamma", layer.weight);
      load(base + "beta", layer.bias);
      load(base + "running_mean", layer.running_mean);
      load(base + "running_var", layer.running_var);
    }
  }
  stack.mark_updated();
}

}  // namespace ctssl::autonet
