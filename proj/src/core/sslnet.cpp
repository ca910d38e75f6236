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

#include "ctssl/sslnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ctssl/error.hpp"

namespace ctssl {

using autonet::LayerKind;
using autonet::LayerSpec;
using autonet::LayerStack;
using autonet::Mode;

nlohmann::json to_json(const SslConfig& c) {
  return {{"input_dim", c.input_dim},
          {"extractor_widths", c.extractor_widths},
          {"branch_widths", c.branch_widths},
          {"head_hidden", c.head_hidden},
          {"slope", c.slope},
          {"keep_prob", c.keep_prob},
          {"batchnorm", c.batchnorm},
          {"batchnorm_min_batch", c.batchnorm_min_batch}};
}

SslConfig ssl_config_from_json(const nlohmann::json& doc) {
  SslConfig c;
  try {
    if (!doc.is_object()) fail(ErrorKind::Parse, "model config must be an object");
    c.input_dim = doc.value("input_dim", c.input_dim);
    c.extractor_widths = doc.value("extractor_widths", c.extractor_widths);
    c.branch_widths = doc.value("branch_widths", c.branch_widths);
    c.head_hidden = doc.value("head_hidden", c.head_hidden);
    c.slope = doc.value("slope", c.slope);
    c.keep_prob = doc.value("keep_prob", c.keep_prob);
    c.batchnorm = doc.value("batchnorm", c.batchnorm);
    c.batchnorm_min_batch = doc.value("batchnorm_min_batch", c.batchnorm_min_batch);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

LayerStack head_tail(const SslConfig& c, std::size_t out) {
  std::vector<LayerSpec> specs;
  if (c.batchnorm) specs.push_back({LayerKind::BatchNorm, c.head_hidden, c.head_hidden});
  specs.push_back({LayerKind::LeakyRelu, c.head_hidden, c.head_hidden, c.slope});
  specs.push_back({LayerKind::Dropout, c.head_hidden, c.head_hidden, c.slope, c.keep_prob});
  specs.push_back({LayerKind::Affine, c.head_hidden, out});
  return LayerStack(std::move(specs));
}

std::vector<std::size_t> with_input(std::size_t first, const std::vector<std::size_t>& rest) {
  std::vector<std::size_t> w{first};
  w.insert(w.end(), rest.begin(), rest.end());
  return w;
}

template <typename T, typename Stack>
void append_params(std::vector<T>& out, Stack& stack) {
  for (auto* p : stack.parameters()) out.push_back(p);
}

}  // namespace

SslModel::SslModel(SslConfig config) : config_(std::move(config)) {
  if (config_.extractor_widths.empty() || config_.branch_widths.empty())
    fail(ErrorKind::Config, "extractor and branch widths must be non-empty");
  const auto& c = config_;
  extractor = LayerStack::mlp(with_input(c.input_dim, c.extractor_widths), c.slope, c.batchnorm);
  branch_c = LayerStack::mlp(with_input(c.embedding_width(), c.branch_widths), c.slope, c.batchnorm);
  branch_r = LayerStack::mlp(with_input(c.embedding_width(), c.branch_widths), c.slope, c.batchnorm);
  head_c_pair = autonet::PairAffine(c.branch_width(), c.head_hidden);
  head_r_pair = autonet::PairAffine(c.branch_width(), c.head_hidden);
  head_c_tail = head_tail(c, 4);
  head_r_tail = head_tail(c, 1);
  for (auto* s : {&extractor, &branch_c, &branch_r, &head_c_tail, &head_r_tail})
    s->batchnorm_min_batch = c.batchnorm_min_batch;
}

void SslModel::initialize(std::uint64_t seed) {
  autonet::Rng rng(seed);
  extractor.initialize(rng);
  branch_c.initialize(rng);
  head_c_pair.initialize(rng);
  head_c_tail.initialize(rng);
  branch_r.initialize(rng);
  head_r_pair.initialize(rng);
  head_r_tail.initialize(rng);
  mark_updated();
}

void SslModel::zero_parameters() {
  for (auto* p : parameters()) p->fill(0.0);
  mark_updated();
}

void SslModel::mark_updated() {
  for (auto* s : {&extractor, &branch_c, &head_c_tail, &branch_r, &head_r_tail}) s->mark_updated();
}

std::vector<Tensor*> SslModel::parameters() {
  std::vector<Tensor*> out;
  append_params(out, extractor);
  append_params(out, branch_c);
  append_params(out, head_c_pair);
  append_params(out, head_c_tail);
  append_params(out, branch_r);
  append_params(out, head_r_pair);
  append_params(out, head_r_tail);
  return out;
}

std::vector<const Tensor*> SslModel::parameters() const {
  std::vector<const Tensor*> out;
  append_params(out, extractor);
  append_params(out, branch_c);
  append_params(out, head_c_pair);
  append_params(out, head_c_tail);
  append_params(out, branch_r);
  append_params(out, head_r_pair);
  append_params(out, head_r_tail);
  return out;
}

SslModel::Ranges SslModel::ranges() const {
  const std::size_t e = extractor.parameters().size();
  const std::size_t c = e + branch_c.parameters().size() + 3 + head_c_tail.parameters().size();
  const std::size_t r = c + branch_r.parameters().size() + 3 + head_r_tail.parameters().size();
  return {e, c, r};
}

std::vector<std::string> SslModel::parameter_names() const {
  std::vector<std::string> names;
  auto stack_names = [&](const std::string& prefix, const LayerStack& s) {
    for (std::size_t i = 0; i < s.layers().size(); ++i) {
      const auto kind = s.layers()[i].spec.kind;
      if (kind == LayerKind::Affine || kind == LayerKind::BatchNorm) {
        names.push_back(prefix + "." + std::to_string(i) + ".weight");
        names.push_back(prefix + "." + std::to_string(i) + ".bias");
      }
    }
  };
  auto pair_names = [&](const std::string& prefix) {
    for (const char* n : {".weight_first", ".weight_second", ".bias"}) names.push_back(prefix + n);
  };
  stack_names("extractor", extractor);
  stack_names("branch_c", branch_c);
  pair_names("head_c_pair");
  stack_names("head_c_tail", head_c_tail);
  stack_names("branch_r", branch_r);
  pair_names("head_r_pair");
  stack_names("head_r_tail", head_r_tail);
  return names;
}

// ---------------------------------------------------------------------------

namespace {

Tensor cloud_matrix(const PointCloud& cloud) {
  return Tensor({cloud.size(), cloud.dim()}, cloud.coords());
}

void check_dim(const SslModel& model, const PointCloud& cloud) {
  if (cloud.dim() != model.config().input_dim)
    fail(ErrorKind::Shape, "cloud '" + cloud.id() + "' has dimension " +
                               std::to_string(cloud.dim()) + ", model expects " +
                               std::to_string(model.config().input_dim));
}

}  // namespace

Tensor embed_points(const SslModel& model, const PointCloud& cloud) {
  check_dim(model, cloud);
  return autonet::infer(model.extractor, cloud_matrix(cloud));
}

std::vector<double> ball_vector(const Tensor& embeddings, const CoverNode& node) {
  if (node.member_points.empty())
    fail(ErrorKind::Internal, "ball " + std::to_string(node.id) + " has no members");
  const Tensor pooled = autonet::group_mean(embeddings, {node.member_points});
  return pooled.data();
}

struct TaskPass {
  bool active = false;
  double weight = 0.0;
  std::vector<std::vector<std::size_t>> groups;
  autonet::Tape branch_tape;
  autonet::PairAffineCache pair_cache;
  autonet::Tape tail_tape;
  Tensor head_grad;  // d loss / d head output, already mean-reduced
};

struct PretextForward::Impl {
  const SslModel* model = nullptr;
  bool ran_extractor = false;
  autonet::Tape extractor_tape;
  std::size_t total_points = 0;
  TaskPass c, r;
};

std::vector<char> PretextForward::relu_pattern() const {
  std::vector<char> out;
  if (!impl) return out;
  const SslModel& m = *impl->model;
  auto add = [&](const autonet::LayerStack& stack, const autonet::Tape& tape) {
    const auto p = autonet::relu_pattern(stack, tape);
    out.insert(out.end(), p.begin(), p.end());
  };
  if (impl->ran_extractor) add(m.extractor, impl->extractor_tape);
  if (impl->c.active) {
    add(m.branch_c, impl->c.branch_tape);
    add(m.head_c_tail, impl->c.tail_tape);
  }
  if (impl->r.active) {
    add(m.branch_r, impl->r.branch_tape);
    add(m.head_r_tail, impl->r.tail_tape);
  }
  return out;
}

namespace {

// Gathers the balls and pairs one task needs from the batch.
struct TaskBatch {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<autonet::IndexPair> pairs;
  std::vector<int> class_labels;
  std::vector<double> targets;
};

TaskBatch collect(char task, const std::vector<const PretextCloud*>& batch,
                  const std::vector<std::size_t>& offsets) {
  TaskBatch out;
  std::map<std::pair<std::size_t, NodeId>, std::size_t> ball_index;
  for (std::size_t ci = 0; ci < batch.size(); ++ci) {
    const PretextCloud& pc = *batch[ci];
    const CoverTree& tree = *pc.tree;
    auto ball = [&](NodeId id) {
      if (id >= tree.nodes().size())
        fail(ErrorKind::Data, "record references missing node " + std::to_string(id) +
                                  " of cloud '" + pc.cloud->id() + "'");
      auto [it, inserted] = ball_index.try_emplace({ci, id}, out.groups.size());
      if (inserted) {
        std::vector<std::size_t> rows = tree.node(id).member_points;
        if (rows.empty()) fail(ErrorKind::Internal, "empty ball " + std::to_string(id));
        for (auto& r : rows) r += offsets[ci];
        out.groups.push_back(std::move(rows));
      }
      return it->second;
    };
    for (const auto& rec : pc.records) {
      if (rec.task != task) continue;
      if (task == 'C') {
        const int label = static_cast<int>(rec.label);
        if (static_cast<double>(label) != rec.label || label < 1 || label > 4)
          fail(ErrorKind::Data, "C record label " + std::to_string(rec.label) + " is not a quadrant");
        if (rec.a >= tree.nodes().size() || rec.b >= tree.nodes().size() ||
            tree.node(rec.b).parent != rec.a)
          fail(ErrorKind::Data, "C record (" + std::to_string(rec.a) + ", " +
                                    std::to_string(rec.b) + ") is not a parent/child edge");
        out.class_labels.push_back(label);
      } else {
        if (rec.a >= tree.nodes().size() || rec.b >= tree.nodes().size() ||
            tree.node(rec.a).level != tree.node(rec.b).level)
          fail(ErrorKind::Data, "R record (" + std::to_string(rec.a) + ", " +
                                    std::to_string(rec.b) + ") does not pair same-level nodes");
        out.targets.push_back(rec.label);
      }
      const std::size_t a = ball(rec.a);
      const std::size_t b = ball(rec.b);
      out.pairs.emplace_back(a, b);
    }
  }
  return out;
}

}  // namespace

PretextForward pretext_forward(SslModel& model, const std::vector<const PretextCloud*>& batch,
                               Mode mode, autonet::Rng& rng, const TaskMask& mask) {
  PretextForward res;
  auto impl = std::make_shared<PretextForward::Impl>();
  impl->model = &model;

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto* pc : batch) {
    check_dim(model, *pc->cloud);
    offsets.push_back(total);
    total += pc->cloud->size();
  }
  impl->total_points = total;

  TaskBatch cb, rb;
  if (mask.use_c) cb = collect('C', batch, offsets);
  if (mask.use_r()) rb = collect('R', batch, offsets);
  res.count_c = cb.pairs.size();
  res.count_r = rb.pairs.size();
  res.logits = Tensor::matrix(0, 4);
  res.preds = Tensor::matrix(0, 1);

  if (res.count_c == 0 && res.count_r == 0) {
    res.impl = std::move(impl);
    return res;
  }

  Tensor points = Tensor::matrix(total, model.config().input_dim);
  for (std::size_t ci = 0; ci < batch.size(); ++ci) {
    const auto& coords = batch[ci]->cloud->coords();
    std::copy(coords.begin(), coords.end(), points.ptr() + offsets[ci] * points.cols());
  }
  auto ext = autonet::forward(model.extractor, points, mode, rng);
  impl->extractor_tape = std::move(ext.tape);
  impl->ran_extractor = true;
  const Tensor& embeddings = ext.output;

  auto run = [&](TaskPass& pass, TaskBatch& tb, LayerStack& branch, autonet::PairAffine& pair,
                 LayerStack& tail) {
    pass.active = true;
    pass.groups = std::move(tb.groups);
    const Tensor pooled = autonet::group_mean(embeddings, pass.groups);
    auto br = autonet::forward(branch, pooled, mode, rng);
    pass.branch_tape = std::move(br.tape);
    const Tensor z = autonet::pair_affine_forward(pair, br.output, tb.pairs, &pass.pair_cache);
    auto out = autonet::forward(tail, z, mode, rng);
    pass.tail_tape = std::move(out.tape);
    return std::move(out.output);
  };

  if (res.count_c > 0) {
    res.logits = run(impl->c, cb, model.branch_c, model.head_c_pair, model.head_c_tail);
    auto loss = autonet::cross_entropy(res.logits, cb.class_labels);
    res.loss_c = loss.value;
    impl->c.weight = 1.0;
    impl->c.head_grad = std::move(loss.grad);
  }
  if (res.count_r > 0) {
    res.preds = run(impl->r, rb, model.branch_r, model.head_r_pair, model.head_r_tail);
    auto loss = autonet::mse(res.preds, rb.targets);
    res.loss_r = loss.value;
    impl->r.weight = mask.lambda;
    impl->r.head_grad = std::move(loss.grad);
  }
  res.impl = std::move(impl);
  return res;
}

std::vector<Tensor> pretext_backward(const SslModel& model, const PretextForward& fwd) {
  if (!fwd.impl || fwd.impl->model != &model)
    fail(ErrorKind::Usage, "pretext_backward needs the forward result of the same model");
  const auto& impl = *fwd.impl;

  std::vector<Tensor> grads;
  for (const Tensor* p : model.parameters()) grads.emplace_back(p->shape(), 0.0);
  const auto ranges = model.ranges();
  if (!impl.ran_extractor) return grads;

  Tensor d_embed = Tensor::matrix(impl.total_points, model.config().embedding_width());

  auto task = [&](const TaskPass& pass, const LayerStack& branch, const autonet::PairAffine& pair,
                  const LayerStack& tail, std::size_t first) {
    if (!pass.active) return;
    Tensor upstream = pass.head_grad;
    for (auto& v : upstream.data()) v *= pass.weight;
    auto gt = autonet::backward(tail, pass.tail_tape, upstream);
    auto gp = autonet::pair_affine_backward(pair, pass.pair_cache, gt.input);
    auto gb = autonet::backward(branch, pass.branch_tape, gp.input);
    const Tensor d_pool = autonet::group_mean_backward(gb.input, pass.groups, impl.total_points);
    for (std::size_t k = 0; k < d_embed.size(); ++k) d_embed.data()[k] += d_pool.data()[k];

    std::size_t at = first;
    for (auto& g : gb.params) grads[at++] = std::move(g);
    grads[at++] = std::move(gp.weight_first);
    grads[at++] = std::move(gp.weight_second);
    grads[at++] = std::move(gp.bias);
    for (auto& g : gt.params) grads[at++] = std::move(g);
  };
  task(impl.c, model.branch_c, model.head_c_pair, model.head_c_tail, ranges.extractor_end);
  task(impl.r, model.branch_r, model.head_r_pair, model.head_r_tail, ranges.c_end);

  auto ge = autonet::backward(model.extractor, impl.extractor_tape, d_embed);
  for (std::size_t i = 0; i < ge.params.size(); ++i) grads[i] = std::move(ge.params[i]);
  return grads;
}

// ---------------------------------------------------------------------------

PretrainResult pretrain(SslModel& model, const std::vector<PretextCloud>& clouds,
                        const SupportGuard& guard, const PretrainConfig& config) {
  if (config.batch_clouds == 0) fail(ErrorKind::Config, "batch_clouds must be positive");
  if (!config.use_c && !(config.lambda > 0.0))
    fail(ErrorKind::Config, "both pretext tasks are disabled");

  std::size_t usable = 0;
  for (const auto& pc : clouds) {
    guard.require(pc.cloud->id());
    for (const auto& rec : pc.records) {
      guard.require(rec.cloud);
      if (rec.cloud != pc.cloud->id())
        fail(ErrorKind::Usage, "record for '" + rec.cloud + "' attached to cloud '" +
                                   pc.cloud->id() + "'");
      if ((rec.task == 'C' && config.use_c) || (rec.task == 'R' && config.lambda > 0.0)) ++usable;
    }
  }
  if (usable == 0) fail(ErrorKind::Config, "no pretext records for the enabled tasks");

  const TaskMask mask{config.use_c, config.lambda};
  autonet::Rng order_rng(autonet::derive_seed(config.seed, 1));
  autonet::Rng dropout_rng(autonet::derive_seed(config.seed, 2));
  autonet::AdamState adam;
  adam.lr = config.lr;
  auto params = model.parameters();

  PretrainResult result;
  std::vector<std::size_t> order(clouds.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    LossPoint point{epoch, 0.0, 0.0, 0.0};
    std::size_t groups = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_clouds) {
      const std::size_t stop = std::min(order.size(), start + config.batch_clouds);

      // Chunks of at most records_per_chunk records, in cloud then record order.
      std::vector<std::vector<PretextCloud>> chunks(1);
      std::size_t in_chunk = 0, group_records = 0;
      for (std::size_t k = start; k < stop; ++k) {
        const PretextCloud& pc = clouds[order[k]];
        PretextCloud part{pc.cloud, pc.tree, {}};
        for (const auto& rec : pc.records) {
          if (config.records_per_chunk > 0 && in_chunk == config.records_per_chunk) {
            if (!part.records.empty()) chunks.back().push_back(part);
            part.records.clear();
            chunks.emplace_back();
            in_chunk = 0;
          }
          part.records.push_back(rec);
          ++in_chunk;
          ++group_records;
        }
        if (!part.records.empty()) chunks.back().push_back(std::move(part));
      }
      if (group_records == 0) continue;

      std::vector<Tensor> total;
      double lc = 0.0, lr = 0.0;
      for (const auto& chunk : chunks) {
        std::size_t chunk_records = 0;
        std::vector<const PretextCloud*> batch;
        for (const auto& pc : chunk) {
          batch.push_back(&pc);
          chunk_records += pc.records.size();
        }
        if (chunk_records == 0) continue;
        const double share = static_cast<double>(chunk_records) / static_cast<double>(group_records);
        auto fwd = pretext_forward(model, batch, Mode::Train, dropout_rng, mask);
        auto grads = pretext_backward(model, fwd);
        lc += share * fwd.loss_c;
        lr += share * fwd.loss_r;
        if (total.empty()) {
          total = std::move(grads);
          if (share != 1.0)
            for (auto& t : total)
              for (auto& v : t.data()) v *= share;
        } else {
          for (std::size_t i = 0; i < total.size(); ++i)
            for (std::size_t k = 0; k < total[i].size(); ++k)
              total[i].data()[k] += share * grads[i].data()[k];
        }
      }
      autonet::adam_step(params, total, adam);
      model.mark_updated();
      point.loss_c += lc;
      point.loss_r += lr;
      ++groups;
    }
    if (groups > 0) {
      point.loss_c /= static_cast<double>(groups);
      point.loss_r /= static_cast<double>(groups);
    }
    point.combined = (mask.use_c ? point.loss_c : 0.0) + mask.lambda * point.loss_r;
    result.curve.push_back(point);
  }
  result.steps = adam.step;
  return result;
}

std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss_C,loss_R,combined\n";
  for (const auto& p : curve)
    out << p.epoch << ',' << p.loss_c << ',' << p.loss_r << ',' << p.combined << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

autonet::TensorArchive model_archive(const SslModel& model, std::uint64_t seed, std::uint64_t step) {
  autonet::TensorArchive archive;
  archive.metadata = nlohmann::json{{"format", "ctssl-model"},
                                    {"config", to_json(model.config())},
                                    {"seed", seed},
                                    {"step", step}}
                         .dump();
  autonet::append_stack(archive, "extractor", model.extractor);
  autonet::append_stack(archive, "branch_c", model.branch_c);
  autonet::append_stack(archive, "head_c_tail", model.head_c_tail);
  autonet::append_stack(archive, "branch_r", model.branch_r);
  autonet::append_stack(archive, "head_r_tail", model.head_r_tail);
  auto pair = [&](const std::string& prefix, const autonet::PairAffine& p) {
    archive.entries.push_back({prefix + ".weight_first", "pair_affine", 0, p.weight_first});
    archive.entries.push_back({prefix + ".weight_second", "pair_affine", 0, p.weight_second});
    archive.entries.push_back({prefix + ".bias", "pair_affine", 0, p.bias});
  };
  pair("head_c_pair", model.head_c_pair);
  pair("head_r_pair", model.head_r_pair);
  return archive;
}

LoadedModel model_from_archive(const autonet::TensorArchive& archive) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.metadata);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint metadata: ") + e.what());
  }
  if (meta.value("format", std::string()) != "ctssl-model")
    fail(ErrorKind::Parse, "archive is not a model checkpoint");
  LoadedModel out{SslModel(ssl_config_from_json(meta.at("config"))),
                  meta.value("seed", std::uint64_t{0}), meta.value("step", std::uint64_t{0})};
  SslModel& m = out.model;
  autonet::restore_stack(archive, "extractor", m.extractor);
  autonet::restore_stack(archive, "branch_c", m.branch_c);
  autonet::restore_stack(archive, "head_c_tail", m.head_c_tail);
  autonet::restore_stack(archive, "branch_r", m.branch_r);
  autonet::restore_stack(archive, "head_r_tail", m.head_r_tail);
  auto pair = [&](const std::string& prefix, autonet::PairAffine& p) {
    for (auto [suffix, t] : {std::pair<const char*, Tensor*>{".weight_first", &p.weight_first},
                             {".weight_second", &p.weight_second},
                             {".bias", &p.bias}}) {
      const auto* e = archive.find(prefix + suffix);
      if (!e || e->tensor.shape() != t->shape())
        fail(ErrorKind::Parse, "checkpoint entry '" + prefix + suffix + "' missing or misshapen");
      *t = e->tensor;
    }
  };
  pair("head_c_pair", m.head_c_pair);
  pair("head_r_pair", m.head_r_pair);
  m.mark_updated();
  return out;
}

void save_model(const SslModel& model, const std::filesystem::path& path, std::uint64_t seed,
                std::uint64_t step) {
  autonet::save_archive(model_archive(model, seed, step), path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  return model_from_archive(autonet::load_archive(path));
}

autonet::TensorArchive export_embeddings(const SslModel& model,
                                         const std::vector<PointCloud>& clouds) {
  autonet::TensorArchive archive;
  archive.metadata = nlohmann::json{{"format", "ctssl-embeddings"},
                                    {"width", model.config().embedding_width()}}
                         .dump();
  for (const auto& cloud : clouds)
    archive.entries.push_back({cloud.id(), "embedding", -1, embed_points(model, cloud)});
  return archive;
}

}  // namespace ctssl
