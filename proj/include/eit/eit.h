#ifndef EIT_EIT_H
#define EIT_EIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(EIT_BUILDING_LIBRARY)
#define EIT_API __attribute__((visibility("default")))
#else
#define EIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eit_status {
  EIT_OK = 0,
  EIT_ERR_INVALID_ARGUMENT = 1, /* null handle or pointer, bad enum */
  EIT_ERR_CONTRACT = 2,         /* operation precondition violated */
  EIT_ERR_GEOMETRY = 3,         /* conv / pool geometry yields no output */
  EIT_ERR_CONFIG = 4,           /* invalid model or train configuration */
  EIT_ERR_IO = 5,               /* unreadable or malformed file */
  EIT_ERR_NUMERICAL = 6,        /* divergence or failed gradient check */
  EIT_ERR_DIAGNOSTIC = 7,       /* probe or checker could not produce a result */
  EIT_ERR_INTERNAL = 8
} eit_status;

typedef struct eit_config eit_config;
typedef struct eit_dataset eit_dataset;
typedef struct eit_train_config eit_train_config;
typedef struct eit_model eit_model;

/* Message of the last failing call on this thread; empty when none. */
EIT_API const char* eit_last_error(void);
EIT_API const char* eit_status_name(eit_status status);
/* Releases strings returned through char** out-parameters. */
EIT_API void eit_string_free(char* s);

/* ---- model configuration ------------------------------------------------ */

EIT_API eit_status eit_config_load(const char* path, eit_config** out);
EIT_API eit_status eit_config_parse(const char* json, eit_config** out);
EIT_API void eit_config_free(eit_config* config);
EIT_API eit_status eit_config_set_image(eit_config* config, size_t height, size_t width);
EIT_API eit_status eit_config_set_classes(eit_config* config, size_t classes);
EIT_API eit_status eit_config_to_json(const eit_config* config, char** out);
/* Human-readable schedule and cost table. */
EIT_API eit_status eit_config_describe(const eit_config* config, char** out);
/* JSON cost report with per-component params, MACs and FLOPs. */
EIT_API eit_status eit_config_costs_json(const eit_config* config, char** out);
EIT_API eit_status eit_config_param_count(const eit_config* config, uint64_t* out);
EIT_API eit_status eit_config_flop_count(const eit_config* config, uint64_t* out);

/* ---- gradient checks ---------------------------------------------------- */

typedef struct eit_gradcheck_options {
  uint64_t seed;
  double step;
  double primitive_tolerance;
  double model_tolerance;
  /* Primitive op whose backward rule is deliberately corrupted; NULL for none. */
  const char* fault_op;
} eit_gradcheck_options;

EIT_API void eit_gradcheck_options_init(eit_gradcheck_options* options);
/* Runs per-primitive checks and a full-model check of `config`. The JSON
 * report is returned through report_json. Returns EIT_ERR_NUMERICAL when any
 * group fails (the message names the worst op and parameter) and
 * EIT_ERR_CONFIG when the model is too large for finite differences. */
EIT_API eit_status eit_gradcheck_run(const eit_config* config, const eit_gradcheck_options* options,
                                     char** report_json);

/* ---- datasets ----------------------------------------------------------- */

EIT_API eit_status eit_dataset_generate(size_t count, size_t height, size_t width, double cutoff,
                                        uint64_t seed, eit_dataset** out);
EIT_API eit_status eit_dataset_load(const char* dir, eit_dataset** out);
EIT_API eit_status eit_dataset_save(const eit_dataset* data, const char* dir);
EIT_API eit_status eit_dataset_size(const eit_dataset* data, size_t* out);
EIT_API void eit_dataset_free(eit_dataset* data);

/* ---- training ----------------------------------------------------------- */

EIT_API eit_status eit_train_config_load(const char* path, eit_train_config** out);
EIT_API eit_status eit_train_config_parse(const char* json, eit_train_config** out);
EIT_API eit_status eit_train_config_to_json(const eit_train_config* config, char** out);
EIT_API eit_status eit_train_config_seed(const eit_train_config* config, uint64_t* out);
EIT_API void eit_train_config_free(eit_train_config* config);

/* Trains from a seeded initialization. eval may be NULL. On success *model
 * holds the trained weights and *metrics_csv the per-epoch metrics. */
EIT_API eit_status eit_train(const eit_config* config, const eit_train_config* train_config,
                             const eit_dataset* train, const eit_dataset* eval, eit_model** model,
                             char** metrics_csv);

/* ---- models and checkpoints --------------------------------------------- */

EIT_API eit_status eit_model_init(const eit_config* config, uint64_t seed, eit_model** out);
EIT_API eit_status eit_model_load(const char* path, eit_model** out);
/* dtype is "f64" or "f32". */
EIT_API eit_status eit_model_save(const eit_model* model, const char* path, const char* dtype);
/* images: n * 3 * H * W doubles; logits: n * classes doubles. */
EIT_API eit_status eit_model_forward(const eit_model* model, const double* images, size_t n,
                                     double* logits, size_t logits_len);
EIT_API eit_status eit_model_config(const eit_model* model, eit_config** out);
/* 16 lowercase hex digits. */
EIT_API eit_status eit_model_config_hash(const eit_model* model, char** out);
EIT_API eit_status eit_model_evaluate(const eit_model* model, const eit_dataset* data,
                                      double* loss, double* accuracy);
EIT_API void eit_model_free(eit_model* model);

/* ---- probes ------------------------------------------------------------- */

typedef struct eit_probe_options {
  size_t bins;
  size_t samples;
  size_t query;   /* token index; 0 selects the centre patch */
  size_t threads; /* 0 reads EIT_THREADS, defaulting to 1 */
} eit_probe_options;

EIT_API void eit_probe_options_init(eit_probe_options* options);
/* Writes distances.csv, diversity.csv, spectrum.csv and maps/layer_<i>.pgm
 * under out_dir. */
EIT_API eit_status eit_probe_run(const eit_model* model, const eit_dataset* data,
                                 const eit_probe_options* options, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
