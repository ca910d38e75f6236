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

// ctssl command-line tool. Links only the C interface of libctssl.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctssl/ctssl.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr const char* kOutputEnv = "CTSSL_OUTPUT_DIR";

struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void config_error(const std::string& message) { throw Failure{kExitConfig, message}; }
[[noreturn]] void data_error(const std::string& message) { throw Failure{kExitData, message}; }

void check(ctssl_status status) {
  if (status == CTSSL_OK) return;
  const std::string message = std::string(ctssl_status_name(status)) + " error: " + ctssl_last_error();
  throw Failure{ctssl_status_is_config_error(status) ? kExitConfig : kExitData, message};
}

struct CString {
  char* p = nullptr;
  CString() = default;
  CString(const CString&) = delete;
  CString& operator=(const CString&) = delete;
  ~CString() { ctssl_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct CloudDeleter {
  void operator()(ctssl_cloud* c) const { ctssl_cloud_free(c); }
};
struct TreeDeleter {
  void operator()(ctssl_tree* t) const { ctssl_tree_free(t); }
};
struct ModelDeleter {
  void operator()(ctssl_model* m) const { ctssl_model_free(m); }
};
using Cloud = std::unique_ptr<ctssl_cloud, CloudDeleter>;
using Tree = std::unique_ptr<ctssl_tree, TreeDeleter>;
using Model = std::unique_ptr<ctssl_model, ModelDeleter>;

std::optional<fs::path> output_override() {
  const char* env = std::getenv(kOutputEnv);
  if (env == nullptr || *env == '\0') return std::nullopt;
  return fs::path(env);
}

// Directory flags are replaced by the override; relative file flags are
// rooted in it.
fs::path output_dir(const std::string& flag) {
  if (auto env = output_override()) return *env;
  if (flag.empty()) config_error("--out-dir is required (or set " + std::string(kOutputEnv) + ")");
  return flag;
}

fs::path output_file(const std::string& flag) {
  const fs::path p(flag);
  if (auto env = output_override(); env && p.is_relative()) return *env / p;
  return p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write " + path.string());
  out << text;
  if (!out) data_error("write failed: " + path.string());
}

json read_json(const fs::path& path, bool config) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    const std::string msg = "invalid JSON in " + path.string() + ": " + e.what();
    if (config) config_error(msg);
    data_error(msg);
  }
}

std::vector<std::string> g_argv;

// Reproducibility record for the single-artifact subcommands.
void write_record(const fs::path& artifact, const std::string& command, const json& options) {
  json record = {{"tool", "ctssl"},
                 {"version", ctssl_version()},
                 {"command", command},
                 {"argv", g_argv},
                 {"options", options}};
  write_text(fs::path(artifact.string() + ".run.json"), record.dump(2) + "\n");
}

Cloud load_cloud(const std::string& path, bool normalize) {
  ctssl_cloud* raw = nullptr;
  check(ctssl_cloud_load_xyz(path.c_str(), &raw));
  Cloud cloud(raw);
  if (!normalize) return cloud;
  ctssl_cloud* norm = nullptr;
  check(ctssl_cloud_normalize(cloud.get(), &norm));
  return Cloud(norm);
}

Cloud load_manifest_cloud(const std::string& manifest, const std::string& id, bool normalize) {
  ctssl_cloud* raw = nullptr;
  check(ctssl_manifest_load_cloud(manifest.c_str(), id.c_str(), &raw));
  Cloud cloud(raw);
  if (!normalize) return cloud;
  ctssl_cloud* norm = nullptr;
  check(ctssl_cloud_normalize(cloud.get(), &norm));
  return Cloud(norm);
}

Tree build_tree(const ctssl_cloud* cloud, double epsilon, int max_depth) {
  ctssl_tree* tree = nullptr;
  check(ctssl_tree_build(cloud, epsilon, max_depth, &tree));
  return Tree(tree);
}

Model load_model(const std::string& path) {
  ctssl_model* model = nullptr;
  check(ctssl_model_load(path.c_str(), &model));
  return Model(model);
}

// Run configuration flags, mirroring the configuration keys in kebab-case.
struct ConfigFlags {
  double epsilon = 0;
  int max_depth = 0;
  std::size_t way = 0, shot = 0, q_per_class = 0, repetitions = 0, epochs = 0, batch_clouds = 0;
  double lr = 0, lambda = 0;
  std::uint64_t seed = 0;
  std::string ablation;
  std::size_t subsample_points = 0, records_per_chunk = 0, probe_epochs = 0;
  double probe_lr = 0;
  std::string pooling;
  std::string config_file;
  std::vector<std::pair<std::string, CLI::Option*>> set;

  template <typename T>
  void add(CLI::App* app, const std::string& key, T& target, const std::string& help) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    set.emplace_back(key, app->add_option(flag, target, help));
  }

  void attach(CLI::App* app, bool full) {
    app->add_option("--config", config_file, "JSON file with configuration keys")
        ->check(CLI::ExistingFile);
    add(app, "epsilon", epsilon, "cover-tree base (default 2.0)");
    add(app, "max_depth", max_depth, "levels materialized below the root (default 3)");
    add(app, "epochs", epochs, "pretraining epochs (default 200)");
    add(app, "batch_clouds", batch_clouds, "clouds per optimizer step (default 8)");
    add(app, "lr", lr, "pretraining learning rate (default 0.001)");
    add(app, "lambda", lambda, "weight of the distance loss (default 1)");
    add(app, "seed", seed, "master seed (default 0)");
    set.emplace_back("ablation", app->add_option("--ablation", ablation, "C, R, C+R or none")
                                     ->check(CLI::IsMember({"C", "R", "C+R", "none"})));
    add(app, "records_per_chunk", records_per_chunk, "gradient accumulation chunk (0 = whole group)");
    if (!full) return;
    add(app, "way", way, "classes per episode (default 5)");
    add(app, "shot", shot, "support clouds per class (default 10)");
    add(app, "q_per_class", q_per_class, "query clouds per class (default 20)");
    add(app, "repetitions", repetitions, "episode repetitions (default 10)");
    add(app, "subsample_points", subsample_points, "points kept per cloud (density sweep)");
    add(app, "probe_epochs", probe_epochs, "linear probe epochs (default 300)");
    add(app, "probe_lr", probe_lr, "linear probe learning rate (default 0.01)");
    set.emplace_back("pooling", app->add_option("--pooling", pooling, "mean or meanmax")
                                    ->check(CLI::IsMember({"mean", "meanmax"})));
  }

  json value_of(const std::string& key) const {
    if (key == "epsilon") return epsilon;
    if (key == "max_depth") return max_depth;
    if (key == "way") return way;
    if (key == "shot") return shot;
    if (key == "q_per_class") return q_per_class;
    if (key == "repetitions") return repetitions;
    if (key == "epochs") return epochs;
    if (key == "batch_clouds") return batch_clouds;
    if (key == "lr") return lr;
    if (key == "lambda") return lambda;
    if (key == "seed") return seed;
    if (key == "ablation") return ablation;
    if (key == "subsample_points") return subsample_points;
    if (key == "records_per_chunk") return records_per_chunk;
    if (key == "probe_epochs") return probe_epochs;
    if (key == "probe_lr") return probe_lr;
    if (key == "pooling") return pooling;
    return nullptr;
  }

  // base < --config file < explicit flags
  json resolve(json base = json::object()) const {
    if (!config_file.empty()) {
      const json file = read_json(config_file, true);
      if (!file.is_object()) config_error("--config must hold a JSON object");
      for (const auto& [k, v] : file.items()) base[k] = v;
    }
    for (const auto& [key, opt] : set)
      if (opt->count() > 0) base[key] = value_of(key);
    return base;
  }
};

void print_summary(const std::string& summary_json) {
  const json doc = json::parse(summary_json);
  std::printf("%-24s %10s %10s %11s %5s\n", "method", "mean", "std", "silhouette", "reps");
  for (const auto& m : doc)
    std::printf("%-24s %10.4f %10.4f %11.4f %5zu\n", m["method"].get<std::string>().c_str(),
                m["mean"].get<double>(), m["std"].get<double>(), m["silhouette"].get<double>(),
                m["reps"].get<std::size_t>());
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);

  CLI::App app{"Cover-tree self-supervised pretraining for point clouds"};
  app.set_version_flag("--version", std::string(ctssl_version()));
  app.require_subcommand(1);

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "write a synthetic primitive-shape dataset");
  std::string synth_dir;
  std::size_t synth_classes = 6, synth_per_class = 40, synth_points = 256;
  double synth_noise = 0.01;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out-dir", synth_dir, "dataset directory");
  synth->add_option("--classes", synth_classes, "number of primitive classes (max 6)");
  synth->add_option("--per-class", synth_per_class, "clouds per class");
  synth->add_option("--points", synth_points, "points per cloud");
  synth->add_option("--noise", synth_noise, "Gaussian noise standard deviation");
  synth->add_option("--seed", synth_seed, "generator seed");

  // build-tree
  auto* bt = app.add_subcommand("build-tree", "build and validate a cover tree for one cloud");
  std::string bt_cloud, bt_out;
  double bt_eps = 2.0;
  int bt_depth = 3;
  bool bt_raw = false;
  bt->add_option("--cloud", bt_cloud, "xyz file")->required()->check(CLI::ExistingFile);
  bt->add_option("--epsilon", bt_eps, "cover-tree base");
  bt->add_option("--max-depth", bt_depth, "levels below the root");
  bt->add_flag("--raw", bt_raw, "skip unit-cube normalization");
  bt->add_option("--out", bt_out, "tree JSON output")->required();

  // gen-labels
  auto* gl = app.add_subcommand("gen-labels", "generate pretext labels (JSON lines)");
  std::vector<std::string> gl_clouds;
  std::string gl_manifest, gl_episode, gl_out;
  double gl_eps = 2.0;
  int gl_depth = 3;
  bool gl_raw = false;
  gl->add_option("--cloud", gl_clouds, "xyz file(s)")->check(CLI::ExistingFile);
  gl->add_option("--manifest", gl_manifest, "dataset manifest")->check(CLI::ExistingFile);
  gl->add_option("--episode", gl_episode, "episode JSON; labels cover its support set")
      ->check(CLI::ExistingFile);
  gl->add_option("--epsilon", gl_eps, "cover-tree base");
  gl->add_option("--max-depth", gl_depth, "levels below the root");
  gl->add_flag("--raw", gl_raw, "skip unit-cube normalization");
  gl->add_option("--out", gl_out, "JSON-lines output")->required();

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "pretrain the network on an episode's support set");
  ConfigFlags pt_flags;
  std::string pt_manifest, pt_episode, pt_labels, pt_init, pt_out, pt_loss;
  std::size_t pt_way = 5, pt_shot = 10, pt_q = 20;
  pt->add_option("--manifest", pt_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  pt->add_option("--episode", pt_episode, "episode JSON (sampled from --seed when absent)")
      ->check(CLI::ExistingFile);
  pt->add_option("--way", pt_way, "classes when sampling an episode");
  pt->add_option("--shot", pt_shot, "support clouds per class when sampling");
  pt->add_option("--q-per-class", pt_q, "query clouds per class when sampling");
  pt->add_option("--labels", pt_labels, "precomputed pretext labels")->check(CLI::ExistingFile);
  pt->add_option("--init", pt_init, "continue from this checkpoint")->check(CLI::ExistingFile);
  pt->add_option("--out", pt_out, "checkpoint output")->required();
  pt->add_option("--loss-csv", pt_loss, "loss curve output (default <out>.loss.csv)");
  pt_flags.attach(pt, false);

  // embed
  auto* em = app.add_subcommand("embed", "export eval-mode point embeddings");
  std::string em_model, em_manifest, em_episode, em_out;
  em->add_option("--model", em_model, "checkpoint")->required()->check(CLI::ExistingFile);
  em->add_option("--manifest", em_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  em->add_option("--episode", em_episode, "restrict to support and query clouds")
      ->check(CLI::ExistingFile);
  em->add_option("--out", em_out, "embedding archive output")->required();

  // probe
  auto* pr = app.add_subcommand("probe", "few-shot evaluation on exported embeddings");
  std::string pr_emb, pr_episode, pr_method = "linear", pr_pooling = "mean", pr_out;
  std::size_t pr_k = 1, pr_epochs = 300;
  double pr_lr = 0.01;
  std::uint64_t pr_seed = 0;
  pr->add_option("--embeddings", pr_emb, "embedding archive")->required()->check(CLI::ExistingFile);
  pr->add_option("--episode", pr_episode, "episode JSON")->required()->check(CLI::ExistingFile);
  pr->add_option("--method", pr_method, "linear or knn")->check(CLI::IsMember({"linear", "knn"}));
  pr->add_option("--k", pr_k, "neighbours for knn");
  pr->add_option("--pooling", pr_pooling, "mean or meanmax")->check(CLI::IsMember({"mean", "meanmax"}));
  pr->add_option("--probe-epochs", pr_epochs, "linear probe epochs");
  pr->add_option("--probe-lr", pr_lr, "linear probe learning rate");
  pr->add_option("--seed", pr_seed, "probe seed");
  pr->add_option("--out", pr_out, "result JSON output");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "full episodic experiment with a random-init control");
  ConfigFlags pl_flags;
  std::string pl_manifest, pl_out, pl_record;
  pl->add_option("--manifest", pl_manifest, "dataset manifest")->check(CLI::ExistingFile);
  pl->add_option("--out-dir", pl_out, "output directory");
  pl->add_option("--record", pl_record, "replay a reproducibility record")->check(CLI::ExistingFile);
  pl_flags.attach(pl, true);

  // sweep-epsilon
  auto* sw = app.add_subcommand("sweep-epsilon", "pipeline accuracy and silhouette per epsilon");
  ConfigFlags sw_flags;
  std::string sw_manifest, sw_out, sw_record;
  std::vector<double> sw_grid;
  sw->add_option("--manifest", sw_manifest, "dataset manifest")->check(CLI::ExistingFile);
  sw->add_option("--out-dir", sw_out, "output directory");
  sw->add_option("--record", sw_record, "replay a reproducibility record")->check(CLI::ExistingFile);
  sw->add_option("--grid", sw_grid, "epsilon values (default 1.5,1.7,2.0,2.2,2.5)")->delimiter(',');
  sw_flags.attach(sw, true);

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "feature-space distance from one anchor point");
  std::string hm_model, hm_cloud, hm_out;
  std::size_t hm_anchor = 0;
  bool hm_raw = false;
  hm->add_option("--model", hm_model, "checkpoint")->required()->check(CLI::ExistingFile);
  hm->add_option("--cloud", hm_cloud, "xyz file")->required()->check(CLI::ExistingFile);
  hm->add_option("--anchor", hm_anchor, "anchor point index");
  hm->add_flag("--raw", hm_raw, "skip unit-cube normalization");
  hm->add_option("--out", hm_out, "CSV output")->required();

  auto* ver = app.add_subcommand("version", "print the version string");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*ver) {
      std::printf("%s\n", ctssl_version());
    } else if (*synth) {
      const fs::path dir = output_dir(synth_dir);
      std::size_t count = 0;
      check(ctssl_synthesize(dir.string().c_str(), synth_classes, synth_per_class, synth_points,
                             synth_noise, synth_seed, &count));
      write_record(dir / "manifest.json", "synthesize",
                   {{"classes", synth_classes},
                    {"per_class", synth_per_class},
                    {"points", synth_points},
                    {"noise", synth_noise},
                    {"seed", synth_seed}});
      std::printf("wrote %zu clouds and %s\n", count, (dir / "manifest.json").string().c_str());
    } else if (*bt) {
      const Cloud cloud = load_cloud(bt_cloud, !bt_raw);
      const Tree tree = build_tree(cloud.get(), bt_eps, bt_depth);
      std::size_t violations = 0;
      CString report;
      check(ctssl_tree_validate(tree.get(), cloud.get(), &violations, &report.p));
      CString text;
      check(ctssl_tree_to_json(tree.get(), &text.p));
      const fs::path out = output_file(bt_out);
      write_text(out, text.str() + "\n");
      write_record(out, "build-tree", {{"cloud", bt_cloud}, {"epsilon", bt_eps},
                                       {"max_depth", bt_depth}, {"normalize", !bt_raw}});
      const int top = ctssl_tree_top_level(tree.get());
      std::printf("top level %d, %zu nodes\n", top, ctssl_tree_node_count(tree.get()));
      for (int l = top - 1; l >= top - bt_depth; --l)
        std::printf("  level %d: %zu nodes\n", l, ctssl_tree_level_size(tree.get(), l));
      if (violations > 0) {
        std::fprintf(stderr, "%zu invariant violations: %s\n", violations, report.str().c_str());
        return kExitData;
      }
    } else if (*gl) {
      std::vector<Cloud> clouds;
      if (!gl_manifest.empty() || !gl_episode.empty()) {
        if (gl_manifest.empty() || gl_episode.empty())
          config_error("--manifest and --episode must be given together");
        const json episode = read_json(gl_episode, false);
        for (const auto& item : episode.at("support"))
          clouds.push_back(load_manifest_cloud(gl_manifest, item.at("cloud").get<std::string>(), !gl_raw));
      }
      for (const auto& path : gl_clouds) clouds.push_back(load_cloud(path, !gl_raw));
      if (clouds.empty()) config_error("give --cloud files or --manifest with --episode");
      std::string all;
      std::size_t r_total = 0, c_total = 0;
      for (const auto& cloud : clouds) {
        const Tree tree = build_tree(cloud.get(), gl_eps, gl_depth);
        CString jsonl;
        std::size_t r = 0, c = 0;
        check(ctssl_pretext_jsonl(tree.get(), cloud.get(), &jsonl.p, &r, &c));
        all += jsonl.str();
        r_total += r;
        c_total += c;
      }
      const fs::path out = output_file(gl_out);
      write_text(out, all);
      write_record(out, "gen-labels", {{"clouds", gl_clouds}, {"manifest", gl_manifest},
                                       {"episode", gl_episode}, {"epsilon", gl_eps},
                                       {"max_depth", gl_depth}, {"normalize", !gl_raw}});
      std::printf("%zu clouds: %zu R pairs, %zu C pairs\n", clouds.size(), r_total, c_total);
    } else if (*pt) {
      const json config = pt_flags.resolve();
      const std::uint64_t seed = config.value("seed", std::uint64_t{0});
      const fs::path out = output_file(pt_out);

      std::string episode_text;
      if (!pt_episode.empty()) {
        episode_text = read_text(pt_episode);
      } else {
        CString ep;
        check(ctssl_sample_episode(pt_manifest.c_str(), pt_way, pt_shot, pt_q, seed, &ep.p));
        episode_text = ep.str();
        write_text(fs::path(out.string() + ".episode.json"), episode_text + "\n");
      }
      json episode;
      try {
        episode = json::parse(episode_text);
      } catch (const json::exception& e) {
        data_error(std::string("invalid episode JSON: ") + e.what());
      }
      if (!episode.contains("support") || episode["support"].empty())
        data_error("episode has no support clouds");

      Model model;
      if (!pt_init.empty()) {
        model = load_model(pt_init);
      } else {
        const Cloud first = load_manifest_cloud(
            pt_manifest, episode["support"][0].at("cloud").get<std::string>(), false);
        ctssl_model* raw = nullptr;
        const std::string cfg = config.dump();
        check(ctssl_model_create(cfg.c_str(), ctssl_cloud_dim(first.get()),
                                 ctssl_derive_seed(seed, 10), &raw));
        model.reset(raw);
      }
      CString loss;
      const std::string cfg = config.dump();
      check(ctssl_model_pretrain(model.get(), pt_manifest.c_str(), episode_text.c_str(),
                                 pt_labels.empty() ? nullptr : pt_labels.c_str(), cfg.c_str(),
                                 &loss.p));
      check(ctssl_model_save(model.get(), out.string().c_str()));
      const fs::path loss_path = pt_loss.empty() ? fs::path(out.string() + ".loss.csv") : output_file(pt_loss);
      write_text(loss_path, loss.str());
      write_record(out, "pretrain", {{"manifest", pt_manifest}, {"episode", episode},
                                     {"labels", pt_labels}, {"init", pt_init}, {"config", config}});
      std::printf("wrote %s and %s\n", out.string().c_str(), loss_path.string().c_str());
    } else if (*em) {
      const Model model = load_model(em_model);
      const std::string episode = em_episode.empty() ? std::string() : read_text(em_episode);
      const fs::path out = output_file(em_out);
      check(ctssl_export_embeddings(model.get(), em_manifest.c_str(),
                                    em_episode.empty() ? nullptr : episode.c_str(),
                                    out.string().c_str()));
      write_record(out, "embed", {{"model", em_model}, {"manifest", em_manifest},
                                  {"episode", em_episode}});
      std::printf("wrote %s\n", out.string().c_str());
    } else if (*pr) {
      const std::string episode = read_text(pr_episode);
      const json options = {{"method", pr_method},   {"k", pr_k},
                            {"pooling", pr_pooling}, {"probe_epochs", pr_epochs},
                            {"probe_lr", pr_lr},     {"seed", pr_seed}};
      CString result;
      check(ctssl_probe(pr_emb.c_str(), episode.c_str(), options.dump().c_str(), &result.p));
      if (!pr_out.empty()) {
        const fs::path out = output_file(pr_out);
        write_text(out, result.str() + "\n");
        write_record(out, "probe", {{"embeddings", pr_emb}, {"episode", pr_episode},
                                    {"options", options}});
      }
      std::printf("%s\n", result.str().c_str());
    } else if (*pl || *sw) {
      const bool sweep = sw->parsed();
      ConfigFlags& flags = sweep ? sw_flags : pl_flags;
      std::string manifest = sweep ? sw_manifest : pl_manifest;
      const std::string& record_path = sweep ? sw_record : pl_record;
      json base = json::object();
      std::vector<double> grid = sw_grid;
      if (!record_path.empty()) {
        const json record = read_json(record_path, true);
        if (!record.contains("config")) config_error("record has no config: " + record_path);
        base = record["config"];
        if (manifest.empty()) manifest = record.value("manifest", std::string());
        if (sweep && grid.empty() && record.contains("grid"))
          grid = record["grid"].get<std::vector<double>>();
      }
      if (manifest.empty()) config_error("--manifest is required");
      const json config = flags.resolve(base);
      const fs::path dir = output_dir(sweep ? sw_out : pl_out);
      const std::string cfg = config.dump();
      if (sweep) {
        CString csv;
        check(ctssl_sweep_epsilon(cfg.c_str(), manifest.c_str(), grid.data(), grid.size(),
                                  dir.string().c_str(), &csv.p));
        std::printf("%s", csv.str().c_str());
      } else {
        CString summary;
        check(ctssl_run_pipeline(cfg.c_str(), manifest.c_str(), dir.string().c_str(), &summary.p));
        print_summary(summary.str());
      }
      std::printf("outputs in %s\n", dir.string().c_str());
    } else if (*hm) {
      const Model model = load_model(hm_model);
      const Cloud cloud = load_cloud(hm_cloud, !hm_raw);
      CString csv;
      check(ctssl_heatmap(model.get(), cloud.get(), hm_anchor, &csv.p));
      const fs::path out = output_file(hm_out);
      write_text(out, csv.str());
      write_record(out, "heatmap", {{"model", hm_model}, {"cloud", hm_cloud},
                                    {"anchor", hm_anchor}, {"normalize", !hm_raw}});
      std::printf("wrote %s\n", out.string().c_str());
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "ctssl: %s\n", f.message.c_str());
    return f.code;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "ctssl: malformed input: %s\n", e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "ctssl: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
