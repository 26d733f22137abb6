#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eit/config.hpp"
#include "eit/dataset.hpp"
#include "eit/params.hpp"

namespace eit {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double base_lr = 1e-3;
  double min_lr = 1e-5;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool hflip = false;
  // Linear ramp from base_lr / warmup_steps up to base_lr before the cosine
  // decay starts; counted in epochs.
  std::size_t warmup_epochs = 0;
  // Rescales the gradient when its global L2 norm exceeds this; 0 disables.
  double clip_norm = 0.0;

  // Throws ConfigError naming the field.
  void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& config, int indent = 2);

// min + (base - min) * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double base, double min);
// Learning rate of optimizer step `step` (0-based): linear warmup over the
// first warmup_steps, cosine decay over the rest.
double scheduled_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                    double base, double min);

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before scaling. max_norm <= 0 leaves grads untouched.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

struct MomentumState {
  double momentum = 0.0;
  std::vector<Tensor> velocity;  // lazily sized on the first step
};

// v <- mu v + g; theta <- theta - lr v. grads follow params.tensors() order.
void sgd_step(ModelParams& params, const std::vector<Tensor>& grads, double lr,
              MomentumState& state);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean cross-entropy and accuracy in inference mode.
EvalResult evaluate(const ModelConfig& config, const ModelParams& params, const Dataset& data,
                    std::size_t batch_size = 64);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;  // optimizer steps taken so far
  double lr = 0.0;       // learning rate of the last step
  EvalResult train;
  bool has_eval = false;
  EvalResult eval;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;  // mini-batch loss before each update
};

// Seeded init, per-epoch seeded shuffle, optional horizontal flips, SGD with
// momentum under a cosine schedule. Throws NumericalError on a non-finite loss.
TrainResult train(const ModelConfig& config, const TrainConfig& train_config,
                  const Dataset& train_data, const Dataset* eval_data = nullptr);

// Same as train() but starting from the given parameters.
TrainResult train_from(const ModelConfig& config, const TrainConfig& train_config,
                       ModelParams initial, const Dataset& train_data,
                       const Dataset* eval_data = nullptr);

// epoch,step,lr,train_loss,train_acc,eval_loss,eval_acc with %.17g values;
// eval columns stay empty without an eval set.
std::string metrics_csv(const std::vector<EpochMetrics>& epochs);

}  // namespace eit
