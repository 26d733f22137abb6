#include "eit/eit.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "eit/checkpoint.hpp"
#include "eit/config.hpp"
#include "eit/cost.hpp"
#include "eit/dataset.hpp"
#include "eit/diagnostics.hpp"
#include "eit/errors.hpp"
#include "eit/model.hpp"
#include "eit/params.hpp"
#include "eit/probe.hpp"
#include "eit/train.hpp"

struct eit_config {
  eit::ModelConfig value;
};

struct eit_dataset {
  eit::Dataset value;
};

struct eit_train_config {
  eit::TrainConfig value;
};

struct eit_model {
  eit::ModelConfig config;
  eit::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

eit_status fail(eit_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating library exceptions into status codes.
template <typename F>
eit_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return EIT_OK;
  } catch (const eit::ContractViolation& e) {
    return fail(EIT_ERR_CONTRACT, e.what());
  } catch (const eit::GeometryError& e) {
    return fail(EIT_ERR_GEOMETRY, e.what());
  } catch (const eit::ConfigError& e) {
    return fail(EIT_ERR_CONFIG, e.what());
  } catch (const eit::IoError& e) {
    return fail(EIT_ERR_IO, e.what());
  } catch (const eit::NumericalError& e) {
    return fail(EIT_ERR_NUMERICAL, e.what());
  } catch (const eit::DiagnosticError& e) {
    return fail(EIT_ERR_DIAGNOSTIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(EIT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(EIT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(EIT_ERR_INTERNAL, "unknown error");
  }
}

#define EIT_REQUIRE(ptr)                                                        \
  do {                                                                          \
    if ((ptr) == nullptr) {                                                     \
      return fail(EIT_ERR_INVALID_ARGUMENT, std::string(#ptr) + " is null");    \
    }                                                                           \
  } while (0)

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* eit_last_error(void) { return g_last_error.c_str(); }

const char* eit_status_name(eit_status status) {
  switch (status) {
    case EIT_OK: return "ok";
    case EIT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case EIT_ERR_CONTRACT: return "contract violation";
    case EIT_ERR_GEOMETRY: return "invalid geometry";
    case EIT_ERR_CONFIG: return "invalid configuration";
    case EIT_ERR_IO: return "i/o error";
    case EIT_ERR_NUMERICAL: return "numerical failure";
    case EIT_ERR_DIAGNOSTIC: return "diagnostic error";
    case EIT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void eit_string_free(char* s) { std::free(s); }

// ---- model configuration ---------------------------------------------------

eit_status eit_config_load(const char* path, eit_config** out) {
  EIT_REQUIRE(path);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_config{eit::load_config(path)}; });
}

eit_status eit_config_parse(const char* json, eit_config** out) {
  EIT_REQUIRE(json);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_config{eit::config_from_json(json)}; });
}

void eit_config_free(eit_config* config) { delete config; }

eit_status eit_config_set_image(eit_config* config, size_t height, size_t width) {
  EIT_REQUIRE(config);
  return guarded([&] {
    eit::ModelConfig next = config->value;
    next.image_height = height;
    next.image_width = width;
    next.validate();
    config->value = next;
  });
}

eit_status eit_config_set_classes(eit_config* config, size_t classes) {
  EIT_REQUIRE(config);
  return guarded([&] {
    eit::ModelConfig next = config->value;
    next.classes = classes;
    next.validate();
    config->value = next;
  });
}

eit_status eit_config_to_json(const eit_config* config, char** out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] { *out = copy_string(eit::config_to_json(config->value)); });
}

eit_status eit_config_describe(const eit_config* config, char** out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] {
    *out = copy_string(eit::describe_table(config->value, eit::count_flops(config->value)));
  });
}

eit_status eit_config_costs_json(const eit_config* config, char** out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] {
    *out = copy_string(eit::cost_report_json(config->value, eit::count_flops(config->value)));
  });
}

eit_status eit_config_param_count(const eit_config* config, uint64_t* out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] { *out = eit::count_params(config->value).total_params(); });
}

eit_status eit_config_flop_count(const eit_config* config, uint64_t* out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] { *out = eit::count_flops(config->value).total_flops(); });
}

// ---- gradient checks -------------------------------------------------------

void eit_gradcheck_options_init(eit_gradcheck_options* options) {
  if (options == nullptr) return;
  const eit::GradcheckSuiteOptions defaults;
  options->seed = defaults.seed;
  options->step = defaults.step;
  options->primitive_tolerance = defaults.primitive_tolerance;
  options->model_tolerance = defaults.model_tolerance;
  options->fault_op = nullptr;
}

eit_status eit_gradcheck_run(const eit_config* config, const eit_gradcheck_options* options,
                             char** report_json) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(options);
  EIT_REQUIRE(report_json);
  *report_json = nullptr;
  bool passed = false;
  std::string worst;
  const eit_status status = guarded([&] {
    eit::GradcheckSuiteOptions o;
    o.seed = options->seed;
    o.step = options->step;
    o.primitive_tolerance = options->primitive_tolerance;
    o.model_tolerance = options->model_tolerance;
    if (options->fault_op != nullptr) o.fault_op = options->fault_op;
    const eit::GradcheckSuite suite = eit::run_gradcheck_suite(config->value, o);
    *report_json = copy_string(eit::gradcheck_suite_json(suite));
    passed = suite.passed();
    worst = suite.worst_group() + " (parameter '" + suite.worst_param() + "', " +
            std::to_string(suite.worst_ratio()) + "x tolerance)";
  });
  if (status != EIT_OK) return status;
  if (!passed) return fail(EIT_ERR_NUMERICAL, "gradient check failed; worst offender " + worst);
  return EIT_OK;
}

// ---- datasets --------------------------------------------------------------

eit_status eit_dataset_generate(size_t count, size_t height, size_t width, double cutoff,
                                uint64_t seed, eit_dataset** out) {
  EIT_REQUIRE(out);
  return guarded([&] {
    *out = new eit_dataset{eit::generate_synthetic({count, height, width, cutoff, seed})};
  });
}

eit_status eit_dataset_load(const char* dir, eit_dataset** out) {
  EIT_REQUIRE(dir);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_dataset{eit::load_dataset(dir)}; });
}

eit_status eit_dataset_save(const eit_dataset* data, const char* dir) {
  EIT_REQUIRE(data);
  EIT_REQUIRE(dir);
  return guarded([&] { eit::save_dataset(dir, data->value); });
}

eit_status eit_dataset_size(const eit_dataset* data, size_t* out) {
  EIT_REQUIRE(data);
  EIT_REQUIRE(out);
  *out = data->value.size();
  return EIT_OK;
}

void eit_dataset_free(eit_dataset* data) { delete data; }

// ---- training --------------------------------------------------------------

eit_status eit_train_config_load(const char* path, eit_train_config** out) {
  EIT_REQUIRE(path);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_train_config{eit::load_train_config(path)}; });
}

eit_status eit_train_config_parse(const char* json, eit_train_config** out) {
  EIT_REQUIRE(json);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_train_config{eit::train_config_from_json(json)}; });
}

eit_status eit_train_config_to_json(const eit_train_config* config, char** out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] { *out = copy_string(eit::train_config_to_json(config->value)); });
}

eit_status eit_train_config_seed(const eit_train_config* config, uint64_t* out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  *out = config->value.seed;
  return EIT_OK;
}

void eit_train_config_free(eit_train_config* config) { delete config; }

eit_status eit_train(const eit_config* config, const eit_train_config* train_config,
                     const eit_dataset* train, const eit_dataset* eval, eit_model** model,
                     char** metrics_csv) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(train_config);
  EIT_REQUIRE(train);
  EIT_REQUIRE(model);
  EIT_REQUIRE(metrics_csv);
  return guarded([&] {
    eit::TrainResult r = eit::train(config->value, train_config->value, train->value,
                                    eval != nullptr ? &eval->value : nullptr);
    char* csv = copy_string(eit::metrics_csv(r.epochs));
    *model = new eit_model{config->value, std::move(r.params)};
    *metrics_csv = csv;
  });
}

// ---- models and checkpoints ------------------------------------------------

eit_status eit_model_init(const eit_config* config, uint64_t seed, eit_model** out) {
  EIT_REQUIRE(config);
  EIT_REQUIRE(out);
  return guarded([&] {
    *out = new eit_model{config->value, eit::init_params(config->value, seed)};
  });
}

eit_status eit_model_load(const char* path, eit_model** out) {
  EIT_REQUIRE(path);
  EIT_REQUIRE(out);
  return guarded([&] {
    eit::Checkpoint ck = eit::load_checkpoint(path);
    *out = new eit_model{std::move(ck.config), std::move(ck.params)};
  });
}

eit_status eit_model_save(const eit_model* model, const char* path, const char* dtype) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(path);
  eit::DType d = eit::DType::kF64;
  if (dtype != nullptr) {
    const std::string name = dtype;
    if (name == "f32") {
      d = eit::DType::kF32;
    } else if (name != "f64") {
      return fail(EIT_ERR_INVALID_ARGUMENT, "dtype must be \"f64\" or \"f32\", got \"" + name + "\"");
    }
  }
  return guarded([&] {
    eit::save_checkpoint(path, model->config, model->params, d);
  });
}

eit_status eit_model_forward(const eit_model* model, const double* images, size_t n,
                             double* logits, size_t logits_len) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(images);
  EIT_REQUIRE(logits);
  return guarded([&] {
    const eit::ModelConfig& c = model->config;
    if (n == 0) throw eit::ContractViolation("forward needs at least one image");
    if (logits_len != n * c.classes) {
      throw eit::ContractViolation("logits buffer holds " + std::to_string(logits_len) +
                                   " values, expected " + std::to_string(n * c.classes));
    }
    const std::size_t count = n * c.image_channels * c.image_height * c.image_width;
    eit::Tensor x({n, c.image_channels, c.image_height, c.image_width},
                  std::vector<double>(images, images + count));
    const eit::Tensor out = eit::predict(c, model->params, x);
    std::memcpy(logits, out.data().data(), out.numel() * sizeof(double));
  });
}

eit_status eit_model_config(const eit_model* model, eit_config** out) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(out);
  return guarded([&] { *out = new eit_config{model->config}; });
}

eit_status eit_model_config_hash(const eit_model* model, char** out) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(out);
  return guarded([&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(eit::config_hash(model->config)));
    *out = copy_string(buf);
  });
}

eit_status eit_model_evaluate(const eit_model* model, const eit_dataset* data, double* loss,
                              double* accuracy) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(data);
  EIT_REQUIRE(loss);
  EIT_REQUIRE(accuracy);
  return guarded([&] {
    const eit::EvalResult r = eit::evaluate(model->config, model->params, data->value);
    *loss = r.loss;
    *accuracy = r.accuracy;
  });
}

void eit_model_free(eit_model* model) { delete model; }

// ---- probes ----------------------------------------------------------------

void eit_probe_options_init(eit_probe_options* options) {
  if (options == nullptr) return;
  const eit::probe::ProbeOptions defaults;
  options->bins = defaults.bins;
  options->samples = defaults.samples;
  options->query = defaults.query;
  options->threads = 0;
}

eit_status eit_probe_run(const eit_model* model, const eit_dataset* data,
                         const eit_probe_options* options, const char* out_dir) {
  EIT_REQUIRE(model);
  EIT_REQUIRE(data);
  EIT_REQUIRE(options);
  EIT_REQUIRE(out_dir);
  return guarded([&] {
    eit::probe::ProbeOptions o;
    o.bins = options->bins;
    o.samples = options->samples;
    o.query = options->query;
    o.threads = options->threads;
    if (o.threads == 0) {
      o.threads = 1;
      if (const char* env = std::getenv("EIT_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end == env || *end != '\0' || v == 0) {
          throw eit::ConfigError(std::string("EIT_THREADS: expected a positive integer, got '") +
                                 env + "'");
        }
        o.threads = v;
      }
    }
    const eit::probe::ProbeAccumulator acc =
        eit::probe::run_probe(model->config, model->params, data->value, o);
    eit::probe::write_probe_outputs(acc, out_dir);
  });
}

}  // extern "C"
