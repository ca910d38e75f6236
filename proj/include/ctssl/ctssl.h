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

/*
 * C interface to libctssl.
 *
 * Every fallible call returns a ctssl_status; on failure the message is
 * available from ctssl_last_error() on the calling thread until the next
 * call into the library. Objects are opaque handles released with their
 * matching *_free function. Strings returned through char** out-parameters
 * are heap copies owned by the caller and released with ctssl_string_free().
 *
 * JSON configuration arguments accept any subset of the run configuration
 * keys (epsilon, max_depth, way, shot, q_per_class, repetitions, epochs,
 * batch_clouds, lr, lambda, seed, ablation, subsample_points,
 * records_per_chunk, probe_epochs, probe_lr, pooling, model); missing keys
 * keep their defaults. NULL means "all defaults".
 */
#ifndef CTSSL_CTSSL_H_
#define CTSSL_CTSSL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CTSSL_BUILDING_LIBRARY)
#    define CTSSL_API __declspec(dllexport)
#  else
#    define CTSSL_API __declspec(dllimport)
#  endif
#else
#  define CTSSL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctssl_status {
  CTSSL_OK = 0,
  CTSSL_ERR_ARGUMENT = 1,
  CTSSL_ERR_CONFIG = 2,
  CTSSL_ERR_PARSE = 3,
  CTSSL_ERR_DATA = 4,
  CTSSL_ERR_CAPACITY = 5,
  CTSSL_ERR_SHAPE = 6,
  CTSSL_ERR_USAGE = 7,
  CTSSL_ERR_IO = 8,
  CTSSL_ERR_INTERNAL = 9
} ctssl_status;

typedef struct ctssl_cloud ctssl_cloud;
typedef struct ctssl_tree ctssl_tree;
typedef struct ctssl_model ctssl_model;

CTSSL_API const char* ctssl_version(void);
CTSSL_API const char* ctssl_last_error(void);
CTSSL_API const char* ctssl_status_name(ctssl_status status);
/* Nonzero for argument/configuration failures, zero for data failures. */
CTSSL_API int ctssl_status_is_config_error(ctssl_status status);
CTSSL_API void ctssl_string_free(char* s);
/* Child seed `stream` of `master`; streams 10..13 are the per-episode
 * init, train, probe and subsample seeds used by the pipeline. */
CTSSL_API uint64_t ctssl_derive_seed(uint64_t master, uint64_t stream);

/* ---- point clouds ---- */
CTSSL_API ctssl_status ctssl_cloud_load_xyz(const char* path, ctssl_cloud** out);
CTSSL_API ctssl_status ctssl_cloud_from_coords(const char* id, const double* coords, size_t n,
                                               size_t dim, ctssl_cloud** out);
/* Loads the manifest entry whose path is `cloud_id`, keeping its class label. */
CTSSL_API ctssl_status ctssl_manifest_load_cloud(const char* manifest_path, const char* cloud_id,
                                                 ctssl_cloud** out);
CTSSL_API void ctssl_cloud_free(ctssl_cloud* cloud);
CTSSL_API const char* ctssl_cloud_id(const ctssl_cloud* cloud);
CTSSL_API size_t ctssl_cloud_size(const ctssl_cloud* cloud);
CTSSL_API size_t ctssl_cloud_dim(const ctssl_cloud* cloud);
/* Row-major n*dim coordinates, owned by the handle. */
CTSSL_API const double* ctssl_cloud_coords(const ctssl_cloud* cloud);
CTSSL_API ctssl_status ctssl_cloud_normalize(const ctssl_cloud* cloud, ctssl_cloud** out);
CTSSL_API ctssl_status ctssl_cloud_subsample(const ctssl_cloud* cloud, size_t k, uint64_t seed,
                                             ctssl_cloud** out);

/* ---- cover trees ---- */
CTSSL_API ctssl_status ctssl_tree_build(const ctssl_cloud* cloud, double epsilon, int max_depth,
                                        ctssl_tree** out);
CTSSL_API void ctssl_tree_free(ctssl_tree* tree);
CTSSL_API int ctssl_tree_top_level(const ctssl_tree* tree);
CTSSL_API size_t ctssl_tree_node_count(const ctssl_tree* tree);
/* Number of nodes at `level` (0 if the level is not materialized). */
CTSSL_API size_t ctssl_tree_level_size(const ctssl_tree* tree, int level);
/* Writes the violation count; report_json (nullable) receives the details. */
CTSSL_API ctssl_status ctssl_tree_validate(const ctssl_tree* tree, const ctssl_cloud* cloud,
                                           size_t* violations, char** report_json);
CTSSL_API ctssl_status ctssl_tree_to_json(const ctssl_tree* tree, char** json);
CTSSL_API ctssl_status ctssl_tree_from_json(const char* json, ctssl_tree** out);
CTSSL_API ctssl_status ctssl_expansion_constant(const ctssl_cloud* cloud, size_t sample,
                                                uint64_t seed, double* out);

/* ---- pretext labels ---- */
/* JSON-lines, one {"task","cloud","level","a","b","label"} record per pair. */
CTSSL_API ctssl_status ctssl_pretext_jsonl(const ctssl_tree* tree, const ctssl_cloud* cloud,
                                           char** jsonl, size_t* regression_pairs,
                                           size_t* quadrant_pairs);

/* ---- episodes ---- */
CTSSL_API ctssl_status ctssl_sample_episode(const char* manifest_path, size_t way, size_t shot,
                                            size_t q_per_class, uint64_t seed,
                                            char** episode_json);

/* ---- models ---- */
CTSSL_API ctssl_status ctssl_model_create(const char* config_json, size_t input_dim, uint64_t seed,
                                          ctssl_model** out);
CTSSL_API ctssl_status ctssl_model_load(const char* path, ctssl_model** out);
CTSSL_API ctssl_status ctssl_model_save(const ctssl_model* model, const char* path);
CTSSL_API void ctssl_model_free(ctssl_model* model);
CTSSL_API size_t ctssl_model_embedding_width(const ctssl_model* model);
/* Fills out[n * width] with eval-mode point embeddings. */
CTSSL_API ctssl_status ctssl_model_embed(const ctssl_model* model, const ctssl_cloud* cloud,
                                         double* out, size_t out_len);
/*
 * Pretrains on the support set of `episode_json` (clouds resolved through the
 * manifest and normalized). Shuffling and dropout draw from
 * ctssl_derive_seed(config seed, 11). When labels_jsonl_path is non-NULL its records are
 * used instead of freshly generated ones; any record naming a cloud outside
 * the support set is rejected. loss_csv (nullable) receives the loss curve.
 */
CTSSL_API ctssl_status ctssl_model_pretrain(ctssl_model* model, const char* manifest_path,
                                            const char* episode_json,
                                            const char* labels_jsonl_path,
                                            const char* config_json, char** loss_csv);
/* Embeds every cloud of the manifest (or of the episode, when given) and
 * writes a tensor archive keyed by cloud id. */
CTSSL_API ctssl_status ctssl_export_embeddings(const ctssl_model* model, const char* manifest_path,
                                               const char* episode_json, const char* out_path);
/* Heatmap CSV (x,y,z,distance) of feature distances from point `anchor`. */
CTSSL_API ctssl_status ctssl_heatmap(const ctssl_model* model, const ctssl_cloud* cloud,
                                     size_t anchor, char** csv);

/* ---- evaluation ---- */
/*
 * Few-shot probe on exported embeddings. options_json keys: method
 * ("linear" | "knn"), k, pooling, probe_epochs, probe_lr, seed. result_json
 * receives {accuracy, classes, confusion}.
 */
CTSSL_API ctssl_status ctssl_probe(const char* embeddings_path, const char* episode_json,
                                   const char* options_json, char** result_json);
CTSSL_API ctssl_status ctssl_silhouette(const double* vectors, size_t n, size_t dim,
                                        const int* labels, double* out);
CTSSL_API ctssl_status ctssl_miou(const int* predicted, const int* truth, size_t n,
                                  const int* parts, size_t part_count, double* out);

/* ---- experiments ---- */
CTSSL_API ctssl_status ctssl_synthesize(const char* out_dir, size_t classes, size_t per_class,
                                        size_t points, double noise, uint64_t seed,
                                        size_t* cloud_count);
/*
 * Full pipeline. Writes results.csv, summary.csv, run.json and
 * losses/episode_<seed>.csv into out_dir; summary_json (nullable) receives
 * the per-method summary.
 */
CTSSL_API ctssl_status ctssl_run_pipeline(const char* config_json, const char* manifest_path,
                                          const char* out_dir, char** summary_json);
/* Writes sweep.csv and run.json into out_dir; csv (nullable) gets a copy. */
CTSSL_API ctssl_status ctssl_sweep_epsilon(const char* config_json, const char* manifest_path,
                                           const double* grid, size_t grid_len,
                                           const char* out_dir, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* CTSSL_CTSSL_H_ */
