#include "eit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eit/autograd.hpp"
#include "eit/errors.hpp"
#include "eit/model.hpp"
#include "eit/rng.hpp"

namespace eit {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs: must be positive");
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (!(min_lr > 0.0)) throw ConfigError("min_lr: must be positive");
  if (!(base_lr >= min_lr) || !std::isfinite(base_lr)) {
    throw ConfigError("base_lr: must be finite and at least min_lr");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum: must be in [0, 1)");
  if (warmup_epochs >= epochs) throw ConfigError("warmup_epochs: must be less than epochs");
  if (!(clip_norm >= 0.0) || !std::isfinite(clip_norm)) {
    throw ConfigError("clip_norm: must be finite and non-negative");
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("train config: top level must be a JSON object");
  static const std::set<std::string> kKeys = {"epochs", "batch_size",    "base_lr",
                                              "min_lr", "momentum",      "seed",
                                              "hflip",  "warmup_epochs", "clip_norm"};
  for (const auto& [key, _] : doc.items()) {
    if (!kKeys.count(key)) throw ConfigError(key + ": unknown key");
  }
  TrainConfig c;
  const auto count = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    const json& v = doc[key];
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string(key) + ": expected a non-negative integer");
    }
    field = v.get<std::remove_reference_t<decltype(field)>>();
  };
  const auto real = [&](const char* key, double& field) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number()) throw ConfigError(std::string(key) + ": expected a number");
    field = doc[key].get<double>();
  };
  count("epochs", c.epochs);
  count("batch_size", c.batch_size);
  count("seed", c.seed);
  real("base_lr", c.base_lr);
  real("min_lr", c.min_lr);
  real("momentum", c.momentum);
  count("warmup_epochs", c.warmup_epochs);
  real("clip_norm", c.clip_norm);
  if (doc.contains("hflip")) {
    if (!doc["hflip"].is_boolean()) throw ConfigError("hflip: expected true or false");
    c.hflip = doc["hflip"].get<bool>();
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return train_config_from_json(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string train_config_to_json(const TrainConfig& c, int indent) {
  nlohmann::ordered_json doc;
  doc["epochs"] = c.epochs;
  doc["batch_size"] = c.batch_size;
  doc["base_lr"] = c.base_lr;
  doc["min_lr"] = c.min_lr;
  doc["momentum"] = c.momentum;
  doc["seed"] = c.seed;
  doc["hflip"] = c.hflip;
  doc["warmup_epochs"] = c.warmup_epochs;
  doc["clip_norm"] = c.clip_norm;
  return doc.dump(indent);
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base, double min) {
  if (total_steps == 0) return base;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return min + 0.5 * (base - min) * (1.0 + std::cos(std::numbers::pi * t));
}

double scheduled_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                    double base, double min) {
  if (step < warmup_steps) {
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  return cosine_lr(step - warmup_steps, total_steps - std::min(total_steps, warmup_steps), base, min);
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

void sgd_step(ModelParams& params, const std::vector<Tensor>& grads, double lr,
              MomentumState& state) {
  auto& tensors = params.tensors();
  if (grads.size() != tensors.size()) {
    throw ContractViolation("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(tensors.size()) + " parameters");
  }
  if (state.velocity.empty()) {
    for (const auto& t : tensors) state.velocity.emplace_back(t.value.shape());
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& theta = tensors[i].value;
    if (!grads[i].same_shape(theta) || !state.velocity[i].same_shape(theta)) {
      throw ContractViolation("sgd_step: shape mismatch for " + tensors[i].name);
    }
    auto p = theta.data();
    auto v = state.velocity[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
}

namespace {

void check_geometry(const ModelConfig& config, const Dataset& data, const char* what) {
  data.validate();
  if (data.height() != config.image_height || data.width() != config.image_width) {
    throw ConfigError(std::string(what) + ": images are " + std::to_string(data.height()) + "x" +
                      std::to_string(data.width()) + " but the model expects " +
                      std::to_string(config.image_height) + "x" +
                      std::to_string(config.image_width));
  }
  if (data.classes > config.classes) {
    throw ConfigError(std::string(what) + ": " + std::to_string(data.classes) +
                      " classes but the model has " + std::to_string(config.classes));
  }
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

EvalResult evaluate(const ModelConfig& config, const ModelParams& params, const Dataset& data,
                    std::size_t batch_size) {
  check_geometry(config, data, "eval data");
  batch_size = std::max<std::size_t>(batch_size, 1);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const std::size_t k = config.classes;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Dataset batch = data.subset(idx);
    Tape tape(Tape::inference());
    const BoundParams bound = BoundParams::bind(tape, params, false);
    const ForwardResult r = forward(config, bound, tape.constant(batch.images));
    const Var loss = cross_entropy(r.logits, batch.labels);
    loss_sum += loss.value().item() * static_cast<double>(idx.size());
    const auto logits = r.logits.value().data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (argmax_row(logits.subspan(i * k, k)) == static_cast<std::size_t>(batch.labels[i])) {
        ++correct;
      }
    }
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train(const ModelConfig& config, const TrainConfig& tc, const Dataset& train_data,
                  const Dataset* eval_data) {
  config.validate();
  return train_from(config, tc, init_params(config, tc.seed), train_data, eval_data);
}

TrainResult train_from(const ModelConfig& config, const TrainConfig& tc, ModelParams initial,
                       const Dataset& train_data, const Dataset* eval_data) {
  config.validate();
  tc.validate();
  check_params(config, initial);
  check_geometry(config, train_data, "train data");
  if (eval_data != nullptr) check_geometry(config, *eval_data, "eval data");

  TrainResult result;
  result.params = std::move(initial);
  MomentumState state{tc.momentum, {}};
  // Separate streams so toggling hflip or dropout leaves the batch order alone.
  Rng order_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng flip_rng(tc.seed ^ 0xbf58476d1ce4e5b9ULL);
  Rng dropout_rng(tc.seed ^ 0x94d049bb133111ebULL);

  const std::size_t n = train_data.size();
  const std::size_t per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total = per_epoch * tc.epochs;
  const std::size_t warmup = per_epoch * tc.warmup_epochs;
  std::size_t step = 0;
  double lr = tc.base_lr;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    for (std::size_t begin = 0; begin < n; begin += tc.batch_size) {
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(begin),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, begin + tc.batch_size)));
      Dataset batch = train_data.subset(idx);
      if (tc.hflip) {
        const Tensor flipped = hflip(batch.images);
        const std::size_t per = batch.images.numel() / batch.size();
        auto dst = batch.images.data();
        const auto src = flipped.data();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          if (flip_rng.below(2) == 1) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * per), per,
                        dst.begin() + static_cast<std::ptrdiff_t>(i * per));
          }
        }
      }

      Tape tape;
      const BoundParams bound = BoundParams::bind(tape, result.params, true);
      ForwardOptions options;
      options.training = true;
      options.rng = &dropout_rng;
      const std::string where =
          " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step + 1);
      Var loss;
      try {
        const ForwardResult r = forward(config, bound, tape.constant(batch.images), options);
        loss = cross_entropy(r.logits, batch.labels);
      } catch (const ContractViolation& e) {
        // Non-finite activations surface as softmax contract violations.
        throw NumericalError(std::string("training diverged") + where + ": " + e.what());
      }
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("training diverged: loss is " + std::to_string(value) + where);
      }
      result.step_losses.push_back(value);

      const Gradients grads = tape.backward(loss);
      std::vector<Tensor> g;
      g.reserve(bound.ordered().size());
      for (const Var& v : bound.ordered()) g.push_back(grads.of(v));
      clip_grad_norm(g, tc.clip_norm);
      lr = scheduled_lr(step, warmup, total, tc.base_lr, tc.min_lr);
      sgd_step(result.params, g, lr, state);
      ++step;
      for (const auto& t : result.params.tensors()) {
        for (double v : t.value.data()) {
          if (!std::isfinite(v)) {
            throw NumericalError("training diverged: parameter " + t.name + " is non-finite" + where);
          }
        }
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.step = step;
    m.lr = lr;
    try {
      m.train = evaluate(config, result.params, train_data);
      if (eval_data != nullptr) {
        m.has_eval = true;
        m.eval = evaluate(config, result.params, *eval_data);
      }
    } catch (const ContractViolation& e) {
      throw NumericalError("training diverged after epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(m.train.loss)) {
      throw NumericalError("training diverged: train loss is non-finite after epoch " +
                           std::to_string(epoch));
    }
    result.epochs.push_back(m);
  }
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = "epoch,step,lr,train_loss,train_acc,eval_loss,eval_acc\n";
  char buf[256];
  for (const auto& m : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,", m.epoch, m.step, m.lr,
                  m.train.loss, m.train.accuracy);
    out += buf;
    if (m.has_eval) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", m.eval.loss, m.eval.accuracy);
      out += buf;
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace eit
