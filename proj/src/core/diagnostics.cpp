#include "eit/diagnostics.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "eit/errors.hpp"
#include "eit/kernels.hpp"
#include "eit/model.hpp"
#include "eit/params.hpp"
#include "eit/rng.hpp"

namespace eit {

bool GradcheckSuite::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.report.passed(); });
}

namespace {

struct Worst {
  const GradcheckGroup* group = nullptr;
  const GradcheckEntry* entry = nullptr;
  double ratio = 0.0;
};

Worst find_worst(const GradcheckSuite& suite) {
  Worst w;
  for (const auto& g : suite.groups) {
    for (const auto& e : g.report.entries) {
      const double ratio = e.max_rel_error / g.report.tolerance;
      if (w.entry == nullptr || ratio > w.ratio) w = {&g, &e, ratio};
    }
  }
  return w;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Fixed pseudo-random weights so every output element contributes to the
// scalar with a distinct coefficient.
Var weighted_sum(Var y) {
  Rng rng(0x5eed);
  Tensor w = random_tensor(y.shape(), rng, 0.5, 1.5);
  return sum(mul(y, y.tape().constant(std::move(w))));
}

struct PrimitiveCase {
  std::string name;
  std::vector<NamedTensor> params;
  ScalarFunction f;
};

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PrimitiveCase> cases;
  const auto unary = [&](std::string name, Shape shape, std::function<Var(Var)> op) {
    cases.push_back({std::move(name), {{"x", random_tensor(std::move(shape), rng)}},
                     [op](Tape&, std::span<const Var> p) { return weighted_sum(op(p[0])); }});
  };

  cases.push_back({"add",
                   {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({3, 4}, rng)}},
                   [](Tape&, std::span<const Var> p) { return weighted_sum(add(p[0], p[1])); }});
  cases.push_back({"mul",
                   {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({3, 4}, rng)}},
                   [](Tape&, std::span<const Var> p) { return weighted_sum(mul(p[0], p[1])); }});
  unary("scale", {3, 4}, [](Var x) { return scale(x, 1.7); });
  cases.push_back({"add_broadcast",
                   {{"x", random_tensor({2, 3, 4}, rng)}, {"y", random_tensor({4}, rng)}},
                   [](Tape&, std::span<const Var> p) {
                     return weighted_sum(add_broadcast(p[0], p[1]));
                   }});
  cases.push_back({"matmul",
                   {{"a", random_tensor({2, 3, 4}, rng)}, {"b", random_tensor({4, 5}, rng)}},
                   [](Tape&, std::span<const Var> p) { return weighted_sum(matmul(p[0], p[1])); }});
  unary("permute", {2, 3, 4}, [](Var x) { return permute(x, {2, 0, 1}); });
  unary("reshape", {2, 6}, [](Var x) { return reshape(x, {3, 4}); });
  unary("slice", {2, 5, 3}, [](Var x) { return slice(x, 1, 1, 4); });
  cases.push_back({"concat",
                   {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({2, 2}, rng)}},
                   [](Tape&, std::span<const Var> p) {
                     return weighted_sum(concat({p[0], p[1]}, 1));
                   }});
  unary("softmax", {3, 5}, [](Var x) { return softmax_rows(x); });
  cases.push_back({"layernorm",
                   {{"x", random_tensor({3, 6}, rng)},
                    {"gain", random_tensor({6}, rng, 0.5, 1.5)},
                    {"shift", random_tensor({6}, rng)}},
                   [](Tape&, std::span<const Var> p) {
                     return weighted_sum(layernorm(p[0], p[1], p[2]));
                   }});
  unary("gelu", {3, 4}, [](Var x) { return gelu(x); });
  {
    // Keep inputs away from the kink at zero.
    Tensor x = random_tensor({3, 4}, rng, 0.2, 1.0);
    for (std::size_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    cases.push_back({"relu", {{"x", std::move(x)}},
                     [](Tape&, std::span<const Var> p) { return weighted_sum(relu(p[0])); }});
  }
  {
    ConvSpec spec{3, 3, 2, 1, 1, 3, 4};
    cases.push_back({"conv2d",
                     {{"input", random_tensor({2, 3, 5, 5}, rng)},
                      {"weight", random_tensor(spec.weight_shape(), rng)},
                      {"bias", random_tensor({4}, rng)}},
                     [spec](Tape&, std::span<const Var> p) {
                       return weighted_sum(conv2d(p[0], p[1], p[2], spec));
                     }});
  }
  {
    const ConvSpec spec = ConvSpec::depthwise(4, 3, 1);
    cases.push_back({"conv2d_depthwise",
                     {{"input", random_tensor({1, 4, 5, 5}, rng)},
                      {"weight", random_tensor(spec.weight_shape(), rng)},
                      {"bias", random_tensor({4}, rng)}},
                     [spec](Tape&, std::span<const Var> p) {
                       return weighted_sum(conv2d(p[0], p[1], p[2], spec));
                     }});
  }
  {
    // Distinct values at least 0.05 apart so the argmax is stable under the step.
    Tensor x({1, 2, 4, 4});
    std::vector<std::size_t> order(x.numel());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = -0.8 + 0.05 * static_cast<double>(order[i]);
    cases.push_back({"maxpool2d", {{"x", std::move(x)}},
                     [](Tape&, std::span<const Var> p) {
                       return weighted_sum(maxpool2d(p[0], 2, 2));
                     }});
  }
  cases.push_back({"batchnorm2d",
                   {{"x", random_tensor({3, 2, 3, 3}, rng)},
                    {"gain", random_tensor({2}, rng, 0.5, 1.5)},
                    {"shift", random_tensor({2}, rng)}},
                   [](Tape&, std::span<const Var> p) {
                     return weighted_sum(batchnorm2d(p[0], p[1], p[2]));
                   }});
  unary("dropout", {4, 5}, [](Var x) {
    Rng mask(0xd00d);
    return dropout(x, 0.3, mask);
  });
  cases.push_back({"cross_entropy", {{"logits", random_tensor({4, 5}, rng, -2.0, 2.0)}},
                   [](Tape&, std::span<const Var> p) {
                     static const int labels[] = {0, 3, 1, 4};
                     return cross_entropy(p[0], labels);
                   }});
  unary("sum", {3, 4}, [](Var x) { return sum(x); });
  return cases;
}

}  // namespace

std::string GradcheckSuite::worst_group() const {
  const Worst w = find_worst(*this);
  return w.group ? w.group->name : std::string();
}

std::string GradcheckSuite::worst_param() const {
  const Worst w = find_worst(*this);
  return w.entry ? w.entry->name : std::string();
}

double GradcheckSuite::worst_ratio() const { return find_worst(*this).ratio; }

std::vector<std::string> gradcheck_primitive_names() {
  std::vector<std::string> names;
  for (const auto& c : primitive_cases(0)) names.push_back(c.name);
  return names;
}

GradcheckSuite run_gradcheck_suite(const ModelConfig& config, const GradcheckSuiteOptions& o) {
  if (!o.fault_op.empty()) {
    const std::vector<std::string> ops = gradcheck_primitive_names();
    if (o.fault_op == "conv2d_depthwise" ||
        std::find(ops.begin(), ops.end(), o.fault_op) == ops.end()) {
      std::string known;
      for (const auto& op : ops) {
        if (op != "conv2d_depthwise") known += (known.empty() ? "" : ", ") + op;
      }
      throw ConfigError("fault_op: unknown op '" + o.fault_op + "' (known: " + known + ")");
    }
  }

  GradcheckSuite suite;
  GradcheckOptions go;
  go.step = o.step;
  go.seed = o.seed;
  go.fault_op = o.fault_op;

  if (o.model) {
    config.validate();
    std::size_t count = 0;
    for (const ParamSpec& spec : param_layout(config)) count += shape_numel(spec.shape);
    if (count > kGradcheckParamLimit) {
      throw ConfigError("gradcheck: model has " + std::to_string(count) +
                        " parameters; finite differences are limited to " +
                        std::to_string(kGradcheckParamLimit) +
                        ". Reduce channels, layers, image size or classes");
    }
  }

  if (o.primitives) {
    go.tolerance = o.primitive_tolerance;
    for (auto& c : primitive_cases(o.seed)) {
      suite.groups.push_back({"op:" + c.name, gradcheck(c.f, std::move(c.params), go)});
    }
  }

  if (o.model) {
    go.tolerance = o.model_tolerance;
    const ModelParams params = init_params(config, o.seed, InitScheme::kRandomized);
    Rng rng(o.seed + 1);
    const std::size_t n = 2;
    Tensor images = random_tensor({n, config.image_channels, config.image_height, config.image_width},
                                  rng, 0.0, 1.0);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.below(config.classes));

    std::vector<std::string> names;
    for (const auto& t : params.tensors()) names.push_back(t.name);
    ScalarFunction f = [&](Tape& tape, std::span<const Var> vars) {
      const BoundParams bound = BoundParams::from_vars(names, vars);
      const ForwardResult r = forward(config, bound, tape.constant(images));
      return cross_entropy(r.logits, labels);
    };
    suite.groups.push_back({"model", gradcheck(f, params.tensors(), go)});
  }
  return suite;
}

std::string gradcheck_suite_json(const GradcheckSuite& suite) {
  nlohmann::ordered_json doc;
  doc["passed"] = suite.passed();
  doc["worst_group"] = suite.worst_group();
  doc["worst_param"] = suite.worst_param();
  auto& groups = doc["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : suite.groups) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    double worst = 0.0;
    for (const auto& e : g.report.entries) {
      worst = std::max(worst, e.max_rel_error);
      entries.push_back({{"param", e.name},
                         {"checked", e.checked},
                         {"max_rel_error", e.max_rel_error},
                         {"max_abs_error", e.max_abs_error},
                         {"passed", e.passed}});
    }
    groups.push_back({{"group", g.name},
                      {"tolerance", g.report.tolerance},
                      {"max_rel_error", worst},
                      {"passed", g.report.passed()},
                      {"params", std::move(entries)}});
  }
  return doc.dump(2);
}

}  // namespace eit
