// Command-line front end. Talks to the library only through include/eit/eit.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "eit/eit.h"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

// Carries a library status out of a command body.
struct Failure {
  eit_status status;
  std::string message;
};

void check(eit_status status, const std::string& context) {
  if (status != EIT_OK) {
    std::string msg = eit_last_error();
    if (msg.empty()) msg = eit_status_name(status);
    throw Failure{status, context + ": " + msg};
  }
}

void invalid(const std::string& message) { throw Failure{EIT_ERR_INVALID_ARGUMENT, message}; }

struct CString {
  char* ptr = nullptr;
  ~CString() { eit_string_free(ptr); }
  std::string str() const { return ptr != nullptr ? std::string(ptr) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
};

using ConfigHandle = Handle<eit_config, eit_config_free>;
using DatasetHandle = Handle<eit_dataset, eit_dataset_free>;
using TrainConfigHandle = Handle<eit_train_config, eit_train_config_free>;
using ModelHandle = Handle<eit_model, eit_model_free>;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << text;
  if (!out) throw Failure{EIT_ERR_IO, "cannot write " + path.string()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{EIT_ERR_IO, "cannot create directory " + dir.string() + ": " + ec.message()};
}

ordered_json config_json(const eit_config* config) {
  CString s;
  check(eit_config_to_json(config, &s.ptr), "config");
  return ordered_json::parse(s.str());
}

// Parses "HxW" or a single "N" meaning NxN.
std::pair<std::size_t, std::size_t> parse_extent(const std::string& text, const char* flag) {
  std::size_t h = 0;
  std::size_t w = 0;
  char x = 0;
  char extra = 0;
  const int n = std::sscanf(text.c_str(), "%zu%c%zu%c", &h, &x, &w, &extra);
  if (n == 1) w = h;
  if (!((n == 1) || (n == 3 && (x == 'x' || x == 'X'))) || h == 0 || w == 0) {
    invalid(std::string(flag) + ": expected HxW, got '" + text + "'");
  }
  return {h, w};
}

struct Run {
  std::string command;
  fs::path out_dir;
  ordered_json manifest = ordered_json::object();
  ordered_json outputs = ordered_json::array();

  void output(const fs::path& path) { outputs.push_back(path.filename().string()); }
};

// ---- describe ---------------------------------------------------------------

struct DescribeArgs {
  std::string config;
  std::string image;
  std::size_t classes = 0;
  std::string out = ".";
};

void run_describe(const DescribeArgs& a, Run& run) {
  ConfigHandle config;
  check(eit_config_load(a.config.c_str(), &config.ptr), "config");
  if (!a.image.empty()) {
    const auto [h, w] = parse_extent(a.image, "--image");
    check(eit_config_set_image(config.ptr, h, w), "--image");
  }
  if (a.classes != 0) check(eit_config_set_classes(config.ptr, a.classes), "--classes");

  CString table;
  CString costs;
  check(eit_config_describe(config.ptr, &table.ptr), "describe");
  check(eit_config_costs_json(config.ptr, &costs.ptr), "describe");
  std::cout << table.str();

  write_text(run.out_dir / "costs.json", costs.str() + "\n");
  run.output("costs.json");
  run.manifest["config"] = config_json(config.ptr);
  run.manifest["seed"] = nullptr;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string fault;
};

void run_gradcheck(const GradcheckArgs& a, Run& run) {
  ConfigHandle config;
  check(eit_config_load(a.config.c_str(), &config.ptr), "config");
  run.manifest["config"] = config_json(config.ptr);
  run.manifest["seed"] = a.seed;
  if (!a.fault.empty()) run.manifest["inject_fault"] = a.fault;

  eit_gradcheck_options options;
  eit_gradcheck_options_init(&options);
  options.seed = a.seed;
  options.fault_op = a.fault.empty() ? nullptr : a.fault.c_str();
  CString report;
  const eit_status status = eit_gradcheck_run(config.ptr, &options, &report.ptr);
  const std::string message = eit_last_error();
  if (report.ptr != nullptr) {
    write_text(run.out_dir / "gradcheck.json", report.str() + "\n");
    run.output("gradcheck.json");
    const auto doc = ordered_json::parse(report.str());
    for (const auto& g : doc.at("groups")) {
      std::printf("%-24s max_rel_error=%.3e tol=%.0e %s\n", g.at("group").get<std::string>().c_str(),
                  g.at("max_rel_error").get<double>(), g.at("tolerance").get<double>(),
                  g.at("passed").get<bool>() ? "PASS" : "FAIL");
    }
  }
  if (status != EIT_OK) throw Failure{status, "gradcheck: " + message};
  std::printf("gradcheck passed\n");
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string train_config;
  std::string data;
  std::string eval_data;
  std::string out;
  std::string dtype = "f64";
};

void run_train(const TrainArgs& a, Run& run) {
  ConfigHandle config;
  TrainConfigHandle tc;
  DatasetHandle train;
  DatasetHandle eval;
  check(eit_config_load(a.config.c_str(), &config.ptr), "config");
  check(eit_train_config_load(a.train_config.c_str(), &tc.ptr), "train config");
  run.manifest["config"] = config_json(config.ptr);
  {
    CString s;
    check(eit_train_config_to_json(tc.ptr, &s.ptr), "train config");
    run.manifest["train_config"] = ordered_json::parse(s.str());
    std::uint64_t seed = 0;
    check(eit_train_config_seed(tc.ptr, &seed), "train config");
    run.manifest["seed"] = seed;
  }
  check(eit_dataset_load(a.data.c_str(), &train.ptr), "--data");
  if (!a.eval_data.empty()) check(eit_dataset_load(a.eval_data.c_str(), &eval.ptr), "--eval-data");

  ModelHandle model;
  CString metrics;
  check(eit_train(config.ptr, tc.ptr, train.ptr, eval.ptr, &model.ptr, &metrics.ptr), "train");
  write_text(run.out_dir / "metrics.csv", metrics.str());
  run.output("metrics.csv");
  check(eit_model_save(model.ptr, (run.out_dir / "model.eitckpt").c_str(), a.dtype.c_str()),
        "checkpoint");
  run.output("model.eitckpt");

  double loss = 0.0;
  double acc = 0.0;
  check(eit_model_evaluate(model.ptr, train.ptr, &loss, &acc), "evaluate");
  std::printf("final train loss %.6f accuracy %.4f\n", loss, acc);
  run.manifest["final_train_loss"] = loss;
  run.manifest["final_train_accuracy"] = acc;
}

// ---- probe ------------------------------------------------------------------

struct ProbeArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string config;
  std::size_t bins = 0;
  std::size_t samples = 0;
  std::size_t query = 0;
};

void run_probe(const ProbeArgs& a, Run& run) {
  ModelHandle model;
  check(eit_model_load(a.checkpoint.c_str(), &model.ptr), "--checkpoint");
  ConfigHandle stored;
  check(eit_model_config(model.ptr, &stored.ptr), "checkpoint");
  run.manifest["config"] = config_json(stored.ptr);
  run.manifest["seed"] = nullptr;
  {
    CString hash;
    check(eit_model_config_hash(model.ptr, &hash.ptr), "checkpoint");
    run.manifest["config_hash"] = hash.str();
  }
  if (!a.config.empty()) {
    ConfigHandle expected;
    check(eit_config_load(a.config.c_str(), &expected.ptr), "--config");
    if (config_json(expected.ptr) != config_json(stored.ptr)) {
      throw Failure{EIT_ERR_CONFIG, "--config " + a.config + " does not match the config stored in " +
                                        a.checkpoint};
    }
  }

  DatasetHandle data;
  check(eit_dataset_load(a.data.c_str(), &data.ptr), "--data");
  eit_probe_options options;
  eit_probe_options_init(&options);
  if (a.bins != 0) options.bins = a.bins;
  if (a.samples != 0) options.samples = a.samples;
  options.query = a.query;
  std::size_t n = 0;
  check(eit_dataset_size(data.ptr, &n), "--data");
  run.manifest["probe"] = {{"bins", options.bins},
                           {"samples", std::min(options.samples, n)},
                           {"query", options.query}};
  check(eit_probe_run(model.ptr, data.ptr, &options, run.out_dir.c_str()), "probe");
  for (const char* f : {"distances.csv", "diversity.csv", "spectrum.csv"}) run.output(f);
  for (const auto& entry : fs::directory_iterator(run.out_dir / "maps")) {
    run.outputs.push_back("maps/" + entry.path().filename().string());
  }
  std::printf("probe wrote %zu images' diagnostics to %s\n", std::min(options.samples, n),
              run.out_dir.c_str());
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::size_t count = 256;
  std::string size = "8x8";
  double cutoff = 0.25;
  std::uint64_t seed = 0;
};

void run_gen_data(const GenArgs& a, Run& run) {
  const auto [h, w] = parse_extent(a.size, "--size");
  run.manifest["seed"] = a.seed;
  run.manifest["dataset"] = {{"count", a.count}, {"height", h}, {"width", w}, {"cutoff", a.cutoff}};
  DatasetHandle data;
  check(eit_dataset_generate(a.count, h, w, a.cutoff, a.seed, &data.ptr), "gen-data");
  check(eit_dataset_save(data.ptr, run.out_dir.c_str()), "gen-data");
  run.output("dataset.json");
  run.output("labels.csv");
  std::printf("wrote %zu synthetic images to %s\n", a.count, run.out_dir.c_str());
}

int exit_code(eit_status status) {
  switch (status) {
    case EIT_OK: return kExitOk;
    case EIT_ERR_NUMERICAL: return kExitNumerical;
    default: return kExitInvalid;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EIT toolkit: describe, gradcheck, train, probe and gen-data"};
  app.require_subcommand(1, 1);

  DescribeArgs describe;
  auto* describe_cmd = app.add_subcommand("describe", "Print split schedule, tokens and costs");
  describe_cmd->add_option("--config", describe.config, "Model config JSON")->required()->check(CLI::ExistingFile);
  describe_cmd->add_option("--image", describe.image, "Override image size, HxW");
  describe_cmd->add_option("--classes", describe.classes, "Override class count");
  describe_cmd->add_option("--out", describe.out, "Output directory for costs.json")->capture_default_str();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad_cmd->add_option("--config", grad.config, "Micro model config JSON")->required()->check(CLI::ExistingFile);
  grad_cmd->add_option("--seed", grad.seed, "Seed for inputs and parameters")->capture_default_str();
  grad_cmd->add_option("--out", grad.out, "Output directory for gradcheck.json")->capture_default_str();
  grad_cmd->add_option("--inject-fault", grad.fault, "Corrupt the backward rule of this op");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a toy model");
  train_cmd->add_option("--config", train.config, "Model config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train-config", train.train_config, "Train config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train.data, "Training dataset directory")->required();
  train_cmd->add_option("--eval-data", train.eval_data, "Evaluation dataset directory");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--dtype", train.dtype, "Checkpoint storage dtype")
      ->check(CLI::IsMember({"f64", "f32"}))
      ->capture_default_str();

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Attention distance, diversity, spectrum and maps");
  probe_cmd->add_option("--checkpoint", probe.checkpoint, "Checkpoint file")->required();
  probe_cmd->add_option("--data", probe.data, "Dataset directory")->required();
  probe_cmd->add_option("--out", probe.out, "Output directory")->required();
  probe_cmd->add_option("--config", probe.config, "Expected model config JSON");
  probe_cmd->add_option("--bins", probe.bins, "Frequency bins (default 10)")->check(CLI::PositiveNumber);
  probe_cmd->add_option("--samples", probe.samples, "Images to probe (default 2000)")->check(CLI::PositiveNumber);
  probe_cmd->add_option("--query", probe.query, "Query token for maps (default centre patch)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic two-class frequency dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of images")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Image size, HxW")->capture_default_str();
  gen_cmd->add_option("--cutoff", gen.cutoff, "Low-pass cutoff as a fraction of Nyquist")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  if (*describe_cmd) run.out_dir = describe.out;
  if (*grad_cmd) run.out_dir = grad.out;
  if (*train_cmd) run.out_dir = train.out;
  if (*probe_cmd) run.out_dir = probe.out;
  if (*gen_cmd) run.out_dir = gen.out;

  run.manifest["command"] = run.command;
  ordered_json flags = ordered_json::object();
  for (const CLI::Option* opt : app.get_subcommands().front()->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    const std::string value = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
    flags[opt->get_name()] = value;
  }
  run.manifest["flags"] = flags;

  eit_status status = EIT_OK;
  std::string message;
  try {
    ensure_dir(run.out_dir);
    if (*describe_cmd) run_describe(describe, run);
    if (*grad_cmd) run_gradcheck(grad, run);
    if (*train_cmd) run_train(train, run);
    if (*probe_cmd) run_probe(probe, run);
    if (*gen_cmd) run_gen_data(gen, run);
  } catch (const Failure& f) {
    status = f.status;
    message = f.message;
  } catch (const std::exception& e) {
    status = EIT_ERR_INTERNAL;
    message = e.what();
  }

  const int code = exit_code(status);
  run.manifest["outputs"] = run.outputs;
  run.manifest["status"] = status == EIT_OK ? "ok" : eit_status_name(status);
  run.manifest["exit_code"] = code;
  if (!message.empty()) run.manifest["error"] = message;
  std::error_code ec;
  if (fs::is_directory(run.out_dir, ec)) {
    try {
      write_text(run.out_dir / "manifest.json", run.manifest.dump(2) + "\n");
    } catch (const Failure& f) {
      std::cerr << "warning: " << f.message << "\n";
    }
  }
  if (!message.empty()) std::cerr << "error: " << message << "\n";
  return code;
}
