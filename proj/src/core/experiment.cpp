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

#include "ctssl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iterator>
#include <map>
#include <sstream>
#include <thread>

#include "ctssl/covertree.hpp"
#include "ctssl/episodes.hpp"
#include "ctssl/error.hpp"
#include "ctssl/pretext.hpp"

#ifndef CTSSL_VERSION
#define CTSSL_VERSION "0.1.0-unknown"
#endif

namespace ctssl {

const char* version_string() { return CTSSL_VERSION; }

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"epsilon", c.epsilon},
                      {"max_depth", c.max_depth},
                      {"way", c.way},
                      {"shot", c.shot},
                      {"q_per_class", c.q_per_class},
                      {"repetitions", c.repetitions},
                      {"epochs", c.epochs},
                      {"batch_clouds", c.batch_clouds},
                      {"lr", c.lr},
                      {"lambda", c.lambda},
                      {"seed", c.seed},
                      {"ablation", c.ablation},
                      {"records_per_chunk", c.records_per_chunk},
                      {"probe_epochs", c.probe_epochs},
                      {"probe_lr", c.probe_lr},
                      {"pooling", c.pooling == Pooling::Mean ? "mean" : "meanmax"},
                      {"model", to_json(c.model)}};
  j["subsample_points"] = c.subsample_points ? nlohmann::json(*c.subsample_points) : nlohmann::json();
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  try {
    c.epsilon = doc.value("epsilon", c.epsilon);
    c.max_depth = doc.value("max_depth", c.max_depth);
    c.way = doc.value("way", c.way);
    c.shot = doc.value("shot", c.shot);
    c.q_per_class = doc.value("q_per_class", c.q_per_class);
    c.repetitions = doc.value("repetitions", c.repetitions);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_clouds = doc.value("batch_clouds", c.batch_clouds);
    c.lr = doc.value("lr", c.lr);
    c.lambda = doc.value("lambda", c.lambda);
    c.seed = doc.value("seed", c.seed);
    c.ablation = doc.value("ablation", c.ablation);
    c.records_per_chunk = doc.value("records_per_chunk", c.records_per_chunk);
    c.probe_epochs = doc.value("probe_epochs", c.probe_epochs);
    c.probe_lr = doc.value("probe_lr", c.probe_lr);
    const std::string pooling = doc.value("pooling", std::string("mean"));
    if (pooling != "mean" && pooling != "meanmax")
      fail(ErrorKind::Config, "pooling must be mean or meanmax");
    c.pooling = pooling == "mean" ? Pooling::Mean : Pooling::MeanMax;
    if (doc.contains("subsample_points") && !doc["subsample_points"].is_null())
      c.subsample_points = doc["subsample_points"].get<std::size_t>();
    if (doc.contains("model")) c.model = ssl_config_from_json(doc["model"]);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  if (!(c.epsilon > 1.0)) fail(ErrorKind::Config, "epsilon must exceed 1");
  if (c.max_depth < 1) fail(ErrorKind::Config, "max_depth must be at least 1");
  if (c.way < 2) fail(ErrorKind::Config, "way must be at least 2 for a probe");
  if (c.shot < 1 || c.q_per_class < 1) fail(ErrorKind::Config, "shot and q_per_class must be positive");
  if (c.repetitions < 1) fail(ErrorKind::Config, "repetitions must be positive");
  if (c.batch_clouds < 1) fail(ErrorKind::Config, "batch_clouds must be positive");
  if (!(c.lr > 0.0) || !(c.probe_lr > 0.0)) fail(ErrorKind::Config, "learning rates must be positive");
  if (c.lambda < 0.0) fail(ErrorKind::Config, "lambda must be non-negative");
  if (c.ablation != "C" && c.ablation != "R" && c.ablation != "C+R" && c.ablation != "none")
    fail(ErrorKind::Config, "ablation must be one of C, R, C+R, none");
  if (c.ablation == "R" && !(c.lambda > 0.0))
    fail(ErrorKind::Config, "ablation R needs a positive lambda");
  if (c.subsample_points && *c.subsample_points < 1)
    fail(ErrorKind::Config, "subsample_points must be positive");
}

EpisodeSeeds episode_seeds(std::uint64_t s) {
  using autonet::derive_seed;
  return {s, derive_seed(s, 10), derive_seed(s, 11), derive_seed(s, 12), derive_seed(s, 13)};
}

std::string method_name(const RunConfig& c, bool pretrained) {
  std::string name = pretrained ? "pretrained" : "random-init";
  if (pretrained && c.ablation != "C+R") name += ":" + c.ablation;
  if (c.subsample_points) name += "@" + std::to_string(*c.subsample_points);
  return name;
}

namespace {

template <typename F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), name + ": " + e.what());
  }
}

struct Probed {
  double accuracy;
  double silhouette;
};

Probed probe_model(const SslModel& model, const std::vector<PointCloud>& support,
                   const std::vector<PointCloud>& query, const RunConfig& config,
                   std::uint64_t probe_seed) {
  auto describe = [&](const std::vector<PointCloud>& clouds) {
    std::vector<CloudEmbedding> out;
    for (const auto& c : clouds)
      out.push_back({c.id(), pool_cloud(embed_points(model, c), config.pooling), *c.class_label()});
    return out;
  };
  const auto s = describe(support);
  const auto q = describe(query);
  ProbeConfig pc;
  pc.epochs = config.probe_epochs;
  pc.lr = config.probe_lr;
  pc.seed = probe_seed;
  const auto probe = train_linear_probe(s, pc);
  return {evaluate(probe, q).accuracy, silhouette(q)};
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const Manifest& manifest,
                            std::size_t threads) {
  validate(config);
  const LabeledItems items = labeled_items(manifest);
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : manifest.entries) by_id[e.path] = &e;

  struct RepOutput {
    std::vector<EpisodeRow> rows;
    std::optional<std::vector<LossPoint>> curve;
  };
  auto run_rep = [&](std::size_t rep) {
    RepOutput out;
    const auto seeds = episode_seeds(config.seed + rep);
    const Episode episode = stage("episode", [&] {
      return sample_episode(items, config.way, config.shot, config.q_per_class, seeds.episode);
    });

    std::size_t load_index = 0;
    auto load = [&](const std::vector<EpisodeItem>& list) {
      return stage("load", [&] {
        std::vector<PointCloud> out;
        for (const auto& item : list) {
          PointCloud cloud = load_cloud(manifest, *by_id.at(item.cloud_id));
          if (config.subsample_points)
            cloud = subsample(cloud, *config.subsample_points,
                              autonet::derive_seed(seeds.subsample, load_index));
          ++load_index;
          out.push_back(normalize_unit_cube(cloud));
        }
        return out;
      });
    };
    const std::vector<PointCloud> support = load(episode.support);
    const std::vector<PointCloud> query = load(episode.query);

    SslConfig model_config = config.model;
    model_config.input_dim = support.front().dim();
    SslModel random_model(model_config);
    random_model.initialize(seeds.init);

    if (config.ablation != "none") {
      std::vector<CoverTree> trees;
      trees.reserve(support.size());
      stage("build-tree", [&] {
        for (const auto& c : support) trees.push_back(build_cover_tree(c, config.epsilon, config.max_depth));
        return 0;
      });
      std::vector<PretextCloud> pretext;
      stage("gen-labels", [&] {
        for (std::size_t i = 0; i < support.size(); ++i)
          pretext.push_back({&support[i], &trees[i], to_records(gen_pretext(trees[i], support[i]))});
        return 0;
      });

      SslModel model = random_model;
      PretrainConfig pc;
      pc.epochs = config.epochs;
      pc.batch_clouds = config.batch_clouds;
      pc.lr = config.lr;
      pc.lambda = config.ablation == "C" ? 0.0 : config.lambda;
      pc.use_c = config.ablation != "R";
      pc.seed = seeds.train;
      pc.records_per_chunk = config.records_per_chunk;
      const SupportGuard guard(episode);
      const auto trained = stage("pretrain", [&] { return pretrain(model, pretext, guard, pc); });
      out.curve = trained.curve;

      const auto probed =
          stage("probe", [&] { return probe_model(model, support, query, config, seeds.probe); });
      out.rows.push_back({config.seed + rep, config.way, config.shot, method_name(config, true),
                          probed.accuracy, probed.silhouette});
    }

    const auto control =
        stage("probe", [&] { return probe_model(random_model, support, query, config, seeds.probe); });
    out.rows.push_back({config.seed + rep, config.way, config.shot, method_name(config, false),
                        control.accuracy, control.silhouette});
    return out;
  };

  const std::size_t reps = config.repetitions;
  std::vector<RepOutput> outputs(reps);
  std::vector<std::exception_ptr> errors(reps);
  std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
  workers = std::clamp<std::size_t>(workers, 1, reps);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t rep = next++; rep < reps; rep = next++) {
      try {
        outputs[rep] = run_rep(rep);
      } catch (...) {
        errors[rep] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  PipelineResult result;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    if (errors[rep]) std::rethrow_exception(errors[rep]);
    auto& o = outputs[rep];
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
    if (o.curve) result.loss_curves.push_back(std::move(*o.curve));
  }
  result.summary = summarize(result.rows);
  return result;
}

std::vector<MethodSummary> summarize(const std::vector<EpisodeRow>& rows) {
  std::vector<MethodSummary> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const MethodSummary& m) { return m.method == row.method; });
    if (it == out.end()) {
      out.push_back({row.method, 0.0, 0.0, 0.0, 0});
      it = std::prev(out.end());
    }
    it->mean += row.accuracy;
    it->silhouette_mean += row.silhouette;
    ++it->reps;
  }
  for (auto& m : out) {
    m.mean /= static_cast<double>(m.reps);
    m.silhouette_mean /= static_cast<double>(m.reps);
    double ss = 0.0;
    for (const auto& row : rows)
      if (row.method == m.method) ss += (row.accuracy - m.mean) * (row.accuracy - m.mean);
    m.std = m.reps > 1 ? std::sqrt(ss / static_cast<double>(m.reps - 1)) : 0.0;
  }
  return out;
}

std::string results_csv(const std::vector<EpisodeRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "episode_seed,way,shot,method,accuracy\n";
  for (const auto& r : rows)
    out << r.episode_seed << ',' << r.way << ',' << r.shot << ',' << r.method << ',' << r.accuracy
        << '\n';
  return out.str();
}

std::string summary_csv(const std::vector<MethodSummary>& summary) {
  std::ostringstream out;
  out.precision(17);
  out << "method,mean,std,silhouette,reps\n";
  for (const auto& m : summary)
    out << m.method << ',' << m.mean << ',' << m.std << ',' << m.silhouette_mean << ',' << m.reps
        << '\n';
  return out.str();
}

std::vector<double> default_epsilon_grid() { return {1.5, 1.7, 2.0, 2.2, 2.5}; }

std::vector<SweepRow> sweep_epsilon(const RunConfig& config, const Manifest& manifest,
                                    const std::vector<double>& grid) {
  if (grid.empty()) fail(ErrorKind::Config, "empty epsilon grid");
  for (double e : grid)
    if (!(e > 1.0)) fail(ErrorKind::Config, "epsilon grid values must exceed 1");
  std::vector<SweepRow> out;
  for (double eps : grid) {
    RunConfig c = config;
    c.epsilon = eps;
    if (c.ablation == "none") c.ablation = "C+R";
    const auto res = run_pipeline(c, manifest);
    const std::string pretrained = method_name(c, true);
    for (const auto& m : res.summary)
      if (m.method == pretrained) out.push_back({eps, m.mean, m.silhouette_mean});
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epsilon,accuracy,silhouette\n";
  for (const auto& r : rows) out << r.epsilon << ',' << r.accuracy << ',' << r.silhouette << '\n';
  return out.str();
}

nlohmann::json run_record(const std::string& command, const RunConfig& config,
                          const std::filesystem::path& manifest, const nlohmann::json& extra) {
  nlohmann::json seeds = nlohmann::json::array();
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const auto s = episode_seeds(config.seed + rep);
    seeds.push_back({{"episode", s.episode},
                     {"init", s.init},
                     {"train", s.train},
                     {"probe", s.probe},
                     {"subsample", s.subsample}});
  }
  nlohmann::json record = {{"tool", "ctssl"},
                           {"version", version_string()},
                           {"command", command},
                           {"manifest", std::filesystem::absolute(manifest).string()},
                           {"config", to_json(config)},
                           {"seeds", seeds}};
  for (const auto& [k, v] : extra.items()) record[k] = v;
  return record;
}

}  // namespace ctssl
