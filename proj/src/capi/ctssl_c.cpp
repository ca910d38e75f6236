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

#include "ctssl/ctssl.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctssl/covertree.hpp"
#include "ctssl/episodes.hpp"
#include "ctssl/error.hpp"
#include "ctssl/experiment.hpp"
#include "ctssl/geometry.hpp"
#include "ctssl/pretext.hpp"
#include "ctssl/probe.hpp"
#include "ctssl/sslnet.hpp"
#include "ctssl/synth.hpp"

struct ctssl_cloud {
  ctssl::PointCloud cloud;
};
struct ctssl_tree {
  ctssl::CoverTree tree;
};
struct ctssl_model {
  ctssl::SslModel model;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
};

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

ctssl_status status_for(ctssl::ErrorKind kind) {
  switch (kind) {
    case ctssl::ErrorKind::Argument: return CTSSL_ERR_ARGUMENT;
    case ctssl::ErrorKind::Config: return CTSSL_ERR_CONFIG;
    case ctssl::ErrorKind::Parse: return CTSSL_ERR_PARSE;
    case ctssl::ErrorKind::Data: return CTSSL_ERR_DATA;
    case ctssl::ErrorKind::Capacity: return CTSSL_ERR_CAPACITY;
    case ctssl::ErrorKind::Shape: return CTSSL_ERR_SHAPE;
    case ctssl::ErrorKind::Usage: return CTSSL_ERR_USAGE;
    case ctssl::ErrorKind::Io: return CTSSL_ERR_IO;
    case ctssl::ErrorKind::Internal: return CTSSL_ERR_INTERNAL;
  }
  return CTSSL_ERR_INTERNAL;
}

template <typename F>
ctssl_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return CTSSL_OK;
  } catch (const ctssl::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return CTSSL_ERR_PARSE;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return CTSSL_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CTSSL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CTSSL_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) ctssl::fail(ctssl::ErrorKind::Argument, std::string(what) + " is null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out != nullptr) *out = dup(s);
}

json parse_json(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  return json::parse(text);
}

ctssl::RunConfig config_from(const char* config_json) {
  const json doc = parse_json(config_json);
  if (!doc.is_object()) ctssl::fail(ctssl::ErrorKind::Config, "configuration must be an object");
  auto config = ctssl::run_config_from_json(doc);
  ctssl::validate(config);
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) ctssl::fail(ctssl::ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) ctssl::fail(ctssl::ErrorKind::Io, "write failed: " + path.string());
}

std::vector<ctssl::PointCloud> load_items(const ctssl::Manifest& manifest,
                                          const std::vector<ctssl::EpisodeItem>& items) {
  std::map<std::string, const ctssl::ManifestEntry*> by_id;
  for (const auto& e : manifest.entries) by_id[e.path] = &e;
  std::vector<ctssl::PointCloud> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    auto it = by_id.find(item.cloud_id);
    if (it == by_id.end())
      ctssl::fail(ctssl::ErrorKind::Data, "cloud not in manifest: " + item.cloud_id);
    out.push_back(ctssl::normalize_unit_cube(ctssl::load_cloud(manifest, *it->second)));
  }
  return out;
}

}  // namespace

extern "C" {

const char* ctssl_version(void) { return ctssl::version_string(); }

const char* ctssl_last_error(void) { return g_last_error.c_str(); }

const char* ctssl_status_name(ctssl_status status) {
  switch (status) {
    case CTSSL_OK: return "ok";
    case CTSSL_ERR_ARGUMENT: return "argument";
    case CTSSL_ERR_CONFIG: return "config";
    case CTSSL_ERR_PARSE: return "parse";
    case CTSSL_ERR_DATA: return "data";
    case CTSSL_ERR_CAPACITY: return "capacity";
    case CTSSL_ERR_SHAPE: return "shape";
    case CTSSL_ERR_USAGE: return "usage";
    case CTSSL_ERR_IO: return "io";
    case CTSSL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int ctssl_status_is_config_error(ctssl_status status) {
  return status == CTSSL_ERR_ARGUMENT || status == CTSSL_ERR_CONFIG;
}

void ctssl_string_free(char* s) { std::free(s); }

uint64_t ctssl_derive_seed(uint64_t master, uint64_t stream) {
  return ctssl::autonet::derive_seed(master, stream);
}

ctssl_status ctssl_cloud_load_xyz(const char* path, ctssl_cloud** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ctssl_cloud{ctssl::load_xyz(path)};
  });
}

ctssl_status ctssl_cloud_from_coords(const char* id, const double* coords, size_t n, size_t dim,
                                     ctssl_cloud** out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) require(coords, "coords");
    if (dim == 0) ctssl::fail(ctssl::ErrorKind::Argument, "dim must be positive");
    std::vector<double> v(coords, coords + n * dim);
    *out = new ctssl_cloud{ctssl::PointCloud(id ? id : "", dim, std::move(v))};
  });
}

ctssl_status ctssl_manifest_load_cloud(const char* manifest_path, const char* cloud_id,
                                       ctssl_cloud** out) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(cloud_id, "cloud_id");
    require(out, "out");
    const auto manifest = ctssl::load_manifest(manifest_path);
    for (const auto& e : manifest.entries)
      if (e.path == cloud_id) {
        *out = new ctssl_cloud{ctssl::load_cloud(manifest, e)};
        return;
      }
    ctssl::fail(ctssl::ErrorKind::Data, std::string("cloud not in manifest: ") + cloud_id);
  });
}

void ctssl_cloud_free(ctssl_cloud* cloud) { delete cloud; }

const char* ctssl_cloud_id(const ctssl_cloud* cloud) {
  return cloud ? cloud->cloud.id().c_str() : "";
}

size_t ctssl_cloud_size(const ctssl_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

size_t ctssl_cloud_dim(const ctssl_cloud* cloud) { return cloud ? cloud->cloud.dim() : 0; }

const double* ctssl_cloud_coords(const ctssl_cloud* cloud) {
  return cloud ? cloud->cloud.coords().data() : nullptr;
}

ctssl_status ctssl_cloud_normalize(const ctssl_cloud* cloud, ctssl_cloud** out) {
  return guarded([&] {
    require(cloud, "cloud");
    require(out, "out");
    *out = new ctssl_cloud{ctssl::normalize_unit_cube(cloud->cloud)};
  });
}

ctssl_status ctssl_cloud_subsample(const ctssl_cloud* cloud, size_t k, uint64_t seed,
                                   ctssl_cloud** out) {
  return guarded([&] {
    require(cloud, "cloud");
    require(out, "out");
    *out = new ctssl_cloud{ctssl::subsample(cloud->cloud, k, seed)};
  });
}

ctssl_status ctssl_tree_build(const ctssl_cloud* cloud, double epsilon, int max_depth,
                              ctssl_tree** out) {
  return guarded([&] {
    require(cloud, "cloud");
    require(out, "out");
    *out = new ctssl_tree{ctssl::build_cover_tree(cloud->cloud, epsilon, max_depth)};
  });
}

void ctssl_tree_free(ctssl_tree* tree) { delete tree; }

int ctssl_tree_top_level(const ctssl_tree* tree) { return tree ? tree->tree.top_level() : 0; }

size_t ctssl_tree_node_count(const ctssl_tree* tree) {
  return tree ? tree->tree.nodes().size() : 0;
}

size_t ctssl_tree_level_size(const ctssl_tree* tree, int level) {
  if (tree == nullptr) return 0;
  size_t n = 0;
  for (const auto& node : tree->tree.nodes())
    if (node.level == level) ++n;
  return n;
}

ctssl_status ctssl_tree_validate(const ctssl_tree* tree, const ctssl_cloud* cloud,
                                 size_t* violations, char** report_json) {
  return guarded([&] {
    require(tree, "tree");
    require(cloud, "cloud");
    const auto report = ctssl::validate_invariants(tree->tree, cloud->cloud);
    if (violations != nullptr) *violations = report.violations.size();
    if (report_json != nullptr) {
      json doc = json::array();
      for (const auto& v : report.violations)
        doc.push_back({{"kind", ctssl::to_string(v.kind)}, {"nodes", v.nodes}, {"detail", v.detail}});
      put(report_json, doc.dump());
    }
  });
}

ctssl_status ctssl_tree_to_json(const ctssl_tree* tree, char** out) {
  return guarded([&] {
    require(tree, "tree");
    require(out, "out");
    put(out, ctssl::to_json(tree->tree).dump());
  });
}

ctssl_status ctssl_tree_from_json(const char* text, ctssl_tree** out) {
  return guarded([&] {
    require(text, "json");
    require(out, "out");
    *out = new ctssl_tree{ctssl::cover_tree_from_json(json::parse(text))};
  });
}

ctssl_status ctssl_expansion_constant(const ctssl_cloud* cloud, size_t sample, uint64_t seed,
                                      double* out) {
  return guarded([&] {
    require(cloud, "cloud");
    require(out, "out");
    *out = ctssl::estimate_expansion_constant(cloud->cloud, sample, seed);
  });
}

ctssl_status ctssl_pretext_jsonl(const ctssl_tree* tree, const ctssl_cloud* cloud, char** jsonl,
                                 size_t* regression_pairs, size_t* quadrant_pairs) {
  return guarded([&] {
    require(tree, "tree");
    require(cloud, "cloud");
    const auto data = ctssl::gen_pretext(tree->tree, cloud->cloud);
    if (regression_pairs != nullptr) *regression_pairs = data.regression_pairs.size();
    if (quadrant_pairs != nullptr) *quadrant_pairs = data.quadrant_pairs.size();
    put(jsonl, ctssl::to_jsonl(ctssl::to_records(data)));
  });
}

ctssl_status ctssl_sample_episode(const char* manifest_path, size_t way, size_t shot,
                                  size_t q_per_class, uint64_t seed, char** episode_json) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(episode_json, "episode_json");
    const auto manifest = ctssl::load_manifest(manifest_path);
    const auto episode =
        ctssl::sample_episode(ctssl::labeled_items(manifest), way, shot, q_per_class, seed);
    put(episode_json, ctssl::to_json(episode).dump(2));
  });
}

ctssl_status ctssl_model_create(const char* config_json, size_t input_dim, uint64_t seed,
                                ctssl_model** out) {
  return guarded([&] {
    require(out, "out");
    if (input_dim == 0) ctssl::fail(ctssl::ErrorKind::Argument, "input_dim must be positive");
    const auto config = config_from(config_json);
    ctssl::SslConfig mc = config.model;
    mc.input_dim = input_dim;
    auto handle = std::make_unique<ctssl_model>();
    handle->model = ctssl::SslModel(mc);
    handle->model.initialize(seed);
    handle->seed = seed;
    *out = handle.release();
  });
}

ctssl_status ctssl_model_load(const char* path, ctssl_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto loaded = ctssl::load_model(path);
    *out = new ctssl_model{std::move(loaded.model), loaded.seed, loaded.step};
  });
}

ctssl_status ctssl_model_save(const ctssl_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    ctssl::save_model(model->model, path, model->seed, model->steps);
  });
}

void ctssl_model_free(ctssl_model* model) { delete model; }

size_t ctssl_model_embedding_width(const ctssl_model* model) {
  return model ? model->model.config().embedding_width() : 0;
}

ctssl_status ctssl_model_embed(const ctssl_model* model, const ctssl_cloud* cloud, double* out,
                               size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(cloud, "cloud");
    const auto emb = ctssl::embed_points(model->model, cloud->cloud);
    if (out_len < emb.size())
      ctssl::fail(ctssl::ErrorKind::Argument,
                  "output buffer holds " + std::to_string(out_len) + " values, need " +
                      std::to_string(emb.size()));
    if (emb.size() > 0) {
      require(out, "out");
      std::memcpy(out, emb.ptr(), emb.size() * sizeof(double));
    }
  });
}

ctssl_status ctssl_model_pretrain(ctssl_model* model, const char* manifest_path,
                                  const char* episode_json, const char* labels_jsonl_path,
                                  const char* config_json, char** loss_csv) {
  return guarded([&] {
    require(model, "model");
    require(manifest_path, "manifest_path");
    require(episode_json, "episode_json");
    const auto config = config_from(config_json);
    const auto manifest = ctssl::load_manifest(manifest_path);
    const auto episode = ctssl::episode_from_json(json::parse(episode_json));
    const ctssl::SupportGuard guard(episode);

    const auto support = load_items(manifest, episode.support);
    for (const auto& c : support)
      if (c.dim() != model->model.config().input_dim)
        ctssl::fail(ctssl::ErrorKind::Shape, "cloud " + c.id() + " has dimension " +
                                                 std::to_string(c.dim()) + ", model expects " +
                                                 std::to_string(model->model.config().input_dim));

    std::vector<ctssl::CoverTree> trees;
    trees.reserve(support.size());
    for (const auto& c : support)
      trees.push_back(ctssl::build_cover_tree(c, config.epsilon, config.max_depth));

    std::vector<ctssl::PretextCloud> pretext;
    for (std::size_t i = 0; i < support.size(); ++i) pretext.push_back({&support[i], &trees[i], {}});

    if (labels_jsonl_path != nullptr) {
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < support.size(); ++i) index[support[i].id()] = i;
      for (auto& rec : ctssl::load_jsonl(labels_jsonl_path)) {
        guard.require(rec.cloud);
        pretext[index.at(rec.cloud)].records.push_back(std::move(rec));
      }
    } else {
      for (std::size_t i = 0; i < support.size(); ++i)
        pretext[i].records = ctssl::to_records(ctssl::gen_pretext(trees[i], support[i]));
    }

    ctssl::PretrainConfig pc;
    pc.epochs = config.epochs;
    pc.batch_clouds = config.batch_clouds;
    pc.lr = config.lr;
    pc.lambda = config.ablation == "C" ? 0.0 : config.lambda;
    pc.use_c = config.ablation != "R";
    pc.seed = ctssl::autonet::derive_seed(config.seed, 11);
    pc.records_per_chunk = config.records_per_chunk;
    const auto result = ctssl::pretrain(model->model, pretext, guard, pc);
    model->steps += result.steps;
    put(loss_csv, ctssl::loss_curve_csv(result.curve));
  });
}

ctssl_status ctssl_export_embeddings(const ctssl_model* model, const char* manifest_path,
                                     const char* episode_json, const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(manifest_path, "manifest_path");
    require(out_path, "out_path");
    const auto manifest = ctssl::load_manifest(manifest_path);
    std::vector<ctssl::EpisodeItem> items;
    if (episode_json != nullptr) {
      const auto episode = ctssl::episode_from_json(json::parse(episode_json));
      items = episode.support;
      items.insert(items.end(), episode.query.begin(), episode.query.end());
    } else {
      items = ctssl::labeled_items(manifest);
    }
    const auto clouds = load_items(manifest, items);
    ctssl::autonet::save_archive(ctssl::export_embeddings(model->model, clouds), out_path);
  });
}

ctssl_status ctssl_heatmap(const ctssl_model* model, const ctssl_cloud* cloud, size_t anchor,
                           char** csv) {
  return guarded([&] {
    require(model, "model");
    require(cloud, "cloud");
    require(csv, "csv");
    const auto emb = ctssl::embed_points(model->model, cloud->cloud);
    put(csv, ctssl::heatmap_csv(cloud->cloud, ctssl::feature_heatmap(emb, anchor)));
  });
}

ctssl_status ctssl_probe(const char* embeddings_path, const char* episode_json,
                         const char* options_json, char** result_json) {
  return guarded([&] {
    require(embeddings_path, "embeddings_path");
    require(episode_json, "episode_json");
    require(result_json, "result_json");
    const json options = parse_json(options_json);
    const auto episode = ctssl::episode_from_json(json::parse(episode_json));
    const auto archive = ctssl::autonet::load_archive(embeddings_path);

    const std::string pooling = options.value("pooling", std::string("mean"));
    ctssl::Pooling mode;
    if (pooling == "mean") mode = ctssl::Pooling::Mean;
    else if (pooling == "meanmax") mode = ctssl::Pooling::MeanMax;
    else ctssl::fail(ctssl::ErrorKind::Config, "unknown pooling: " + pooling);

    auto describe = [&](const std::vector<ctssl::EpisodeItem>& items) {
      std::vector<ctssl::CloudEmbedding> out;
      for (const auto& item : items) {
        const auto* entry = archive.find(item.cloud_id);
        if (entry == nullptr)
          ctssl::fail(ctssl::ErrorKind::Data, "no embedding for cloud " + item.cloud_id);
        out.push_back({item.cloud_id, ctssl::pool_cloud(entry->tensor, mode), item.class_label});
      }
      return out;
    };
    const auto support = describe(episode.support);
    const auto query = describe(episode.query);

    const std::string method = options.value("method", std::string("linear"));
    ctssl::Evaluation eval;
    if (method == "linear") {
      ctssl::ProbeConfig pc;
      pc.epochs = options.value("probe_epochs", pc.epochs);
      pc.lr = options.value("probe_lr", pc.lr);
      pc.seed = options.value("seed", pc.seed);
      eval = ctssl::evaluate(ctssl::train_linear_probe(support, pc), query);
    } else if (method == "knn") {
      ctssl::KnnClassifier knn;
      knn.k = options.value("k", std::size_t{1});
      knn.support = support;
      eval = ctssl::evaluate(knn, query);
    } else {
      ctssl::fail(ctssl::ErrorKind::Config, "unknown probe method: " + method);
    }
    json doc = {{"method", method},
                {"accuracy", eval.accuracy},
                {"classes", eval.classes},
                {"confusion", eval.confusion},
                {"silhouette", query.size() > 1 ? ctssl::silhouette(query) : 0.0}};
    put(result_json, doc.dump(2));
  });
}

ctssl_status ctssl_silhouette(const double* vectors, size_t n, size_t dim, const int* labels,
                              double* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) {
      require(vectors, "vectors");
      require(labels, "labels");
    }
    std::vector<std::vector<double>> v(n);
    for (size_t i = 0; i < n; ++i) v[i].assign(vectors + i * dim, vectors + (i + 1) * dim);
    *out = ctssl::silhouette(v, std::span<const int>(labels, n));
  });
}

ctssl_status ctssl_miou(const int* predicted, const int* truth, size_t n, const int* parts,
                        size_t part_count, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) {
      require(predicted, "predicted");
      require(truth, "truth");
    }
    if (part_count > 0) require(parts, "parts");
    *out = ctssl::miou(std::span<const int>(predicted, n), std::span<const int>(truth, n),
                       std::span<const int>(parts, part_count));
  });
}

ctssl_status ctssl_synthesize(const char* out_dir, size_t classes, size_t per_class,
                              size_t points, double noise, uint64_t seed, size_t* cloud_count) {
  return guarded([&] {
    require(out_dir, "out_dir");
    ctssl::SynthOptions o;
    o.classes = classes;
    o.per_class = per_class;
    o.points = points;
    o.noise = noise;
    o.seed = seed;
    const auto manifest = ctssl::synthesize(o, out_dir);
    if (cloud_count != nullptr) *cloud_count = manifest.entries.size();
  });
}

ctssl_status ctssl_run_pipeline(const char* config_json, const char* manifest_path,
                                const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out_dir, "out_dir");
    const auto config = config_from(config_json);
    const auto manifest = ctssl::load_manifest(manifest_path);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    // Record first so a failed run can still be replayed.
    write_text(dir / "run.json", ctssl::run_record("pipeline", config, manifest_path).dump(2));

    const auto result = ctssl::run_pipeline(config, manifest);
    write_text(dir / "results.csv", ctssl::results_csv(result.rows));
    write_text(dir / "summary.csv", ctssl::summary_csv(result.summary));
    for (std::size_t rep = 0; rep < result.loss_curves.size(); ++rep)
      write_text(dir / "losses" / ("episode_" + std::to_string(config.seed + rep) + ".csv"),
                 ctssl::loss_curve_csv(result.loss_curves[rep]));

    if (summary_json != nullptr) {
      json doc = json::array();
      for (const auto& m : result.summary)
        doc.push_back({{"method", m.method},
                       {"mean", m.mean},
                       {"std", m.std},
                       {"silhouette", m.silhouette_mean},
                       {"reps", m.reps}});
      put(summary_json, doc.dump(2));
    }
  });
}

ctssl_status ctssl_sweep_epsilon(const char* config_json, const char* manifest_path,
                                 const double* grid, size_t grid_len, const char* out_dir,
                                 char** csv) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out_dir, "out_dir");
    const auto config = config_from(config_json);
    std::vector<double> values;
    if (grid_len == 0) {
      values = ctssl::default_epsilon_grid();
    } else {
      require(grid, "grid");
      values.assign(grid, grid + grid_len);
    }
    const auto manifest = ctssl::load_manifest(manifest_path);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_text(dir / "run.json",
               ctssl::run_record("sweep-epsilon", config, manifest_path, {{"grid", values}}).dump(2));
    const std::string text = ctssl::sweep_csv(ctssl::sweep_epsilon(config, manifest, values));
    write_text(dir / "sweep.csv", text);
    put(csv, text);
  });
}

}  // extern "C"
