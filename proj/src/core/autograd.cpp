#include "eit/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "eit/errors.hpp"
#include "eit/rng.hpp"

namespace eit {

const Tensor& Var::value() const {
  if (!tape_) throw ContractViolation("use of an unbound Var");
  return tape_->value(id_);
}

Tensor Gradients::of(Var v) const {
  if (v.id() < grads_.size() && grads_[v.id()]) return *grads_[v.id()];
  return Tensor(v.shape());
}

bool Gradients::reached(Var v) const {
  return v.id() < grads_.size() && grads_[v.id()].has_value();
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, {}, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& parents,
                 BackwardFn backward) {
  Node node{std::string(op), std::move(value), {}, {}, false};
  if (options_.record) {
    for (const Var& p : parents) {
      if (&p.tape() != this) throw ContractViolation("operands recorded on different tapes");
      node.parents.push_back(p.id());
      node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw ContractViolation("loss belongs to another tape");
  if (loss.value().numel() != 1) {
    throw ContractViolation("backward() needs a scalar loss, got shape " +
                            shape_str(loss.shape()));
  }
  Gradients result;
  result.tape_ = this;
  result.grads_.resize(nodes_.size());
  result.grads_[loss.id()] = Tensor::full(loss.shape(), 1.0);

  std::vector<Tensor*> parent_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!result.grads_[id] || !node.backward) continue;
    parent_grads.assign(node.parents.size(), nullptr);
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      const std::size_t p = node.parents[i];
      if (!nodes_[p].requires_grad) continue;
      if (!result.grads_[p]) result.grads_[p] = Tensor(nodes_[p].value.shape());
      parent_grads[i] = &*result.grads_[p];
    }
    if (!options_.fault_op.empty() && node.op == options_.fault_op) {
      Tensor scaled = *result.grads_[id];
      for (double& g : scaled.data()) g *= options_.fault_scale;
      node.backward(scaled, parent_grads);
    } else {
      node.backward(*result.grads_[id], parent_grads);
    }
  }
  return result;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + " shape mismatch " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Shared math for layer norm and batch norm backward. `rows` groups of
// `count` elements each, addressed through index(row, j).
template <typename Index>
void norm_backward(const Tensor& xhat, const std::vector<double>& rstd, const Tensor& grad_out,
                   const Tensor& gain, std::size_t rows, std::size_t count, Index index,
                   auto channel_of, Tensor* gx) {
  if (!gx) return;
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t off = index(r, j);
      const double d = grad_out[off] * gain[channel_of(r, j)];
      mean_d += d;
      mean_dx += d * xhat[off];
    }
    mean_d /= static_cast<double>(count);
    mean_dx /= static_cast<double>(count);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t off = index(r, j);
      const double d = grad_out[off] * gain[channel_of(r, j)];
      (*gx)[off] += rstd[r] * (d - mean_d - xhat[off] * mean_dx);
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  return a.tape().record("add", std::move(out), {a, b},
                         [](const Tensor& g, std::span<Tensor* const> p) {
                           if (p[0]) p[0]->accumulate(g);
                           if (p[1]) p[1]->accumulate(g);
                         });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record("mul", std::move(out), {a, b},
                         [a, b](const Tensor& g, std::span<Tensor* const> p) {
                           for (std::size_t i = 0; i < g.numel(); ++i) {
                             if (p[0]) (*p[0])[i] += g[i] * b.value()[i];
                             if (p[1]) (*p[1])[i] += g[i] * a.value()[i];
                           }
                         });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape().record("scale", std::move(out), {x},
                         [factor](const Tensor& g, std::span<Tensor* const> p) {
                           for (std::size_t i = 0; i < g.numel(); ++i) (*p[0])[i] += g[i] * factor;
                         });
}

Var add_broadcast(Var x, Var y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.begin(), ys.end(), xs.end() - ys.size())) {
    throw ContractViolation("add_broadcast: " + shape_str(ys) + " is not a suffix of " +
                            shape_str(xs));
  }
  const std::size_t inner = y.value().numel();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += y.value()[i % inner];
  return x.tape().record("add_broadcast", std::move(out), {x, y},
                         [inner](const Tensor& g, std::span<Tensor* const> p) {
                           if (p[0]) p[0]->accumulate(g);
                           if (p[1]) {
                             for (std::size_t i = 0; i < g.numel(); ++i) (*p[1])[i % inner] += g[i];
                           }
                         });
}

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b},
                         [a, b](const Tensor& g, std::span<Tensor* const> p) {
                           kernels::matmul_backward(a.value(), b.value(), g, p[0], p[1]);
                         });
}

Var linear(Var x, Var w, Var b) { return add_broadcast(matmul(x, w), b); }

Var permute(Var x, std::vector<std::size_t> perm) {
  Tensor out = kernels::permute(x.value(), perm);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return x.tape().record("permute", std::move(out), {x},
                         [inverse](const Tensor& g, std::span<Tensor* const> p) {
                           p[0]->accumulate(kernels::permute(g, inverse));
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const Shape in_shape = x.shape();
  return x.tape().record("reshape", std::move(out), {x},
                         [in_shape](const Tensor& g, std::span<Tensor* const> p) {
                           p[0]->accumulate(g.reshaped(in_shape));
                         });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || begin >= end || end > xs[axis]) {
    throw ContractViolation("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") on axis " + std::to_string(axis) + " of " + shape_str(xs));
  }
  const AxisSplit s = split_at(xs, axis);
  const std::size_t width = end - begin;
  Shape out_shape = xs;
  out_shape[axis] = width;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = x.value().data().data() + (o * s.extent + begin) * s.inner;
    std::copy(src, src + width * s.inner, out.data().data() + o * width * s.inner);
  }
  return x.tape().record("slice", std::move(out), {x},
                         [s, begin, width](const Tensor& g, std::span<Tensor* const> p) {
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             double* dst = p[0]->data().data() + (o * s.extent + begin) * s.inner;
                             const double* src = g.data().data() + o * width * s.inner;
                             for (std::size_t i = 0; i < width * s.inner; ++i) dst[i] += src[i];
                           }
                         });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractViolation("concat of zero tensors");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ContractViolation("concat axis out of range");
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var& v : parts) {
    Shape probe = v.shape();
    if (probe.size() != out_shape.size()) throw ContractViolation("concat rank mismatch");
    widths.push_back(probe[axis]);
    out_shape[axis] += probe[axis];
    probe[axis] = out_shape[axis];
    if (probe != out_shape) {
      throw ContractViolation("concat extents differ off-axis: " + shape_str(v.shape()));
    }
  }
  const AxisSplit s = split_at(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = parts[k].value().data().data() + o * w * s.inner;
      std::copy(src, src + w * s.inner, out.data().data() + (o * s.extent + offset) * s.inner);
    }
    offset += w;
  }
  return parts[0].tape().record(
      "concat", std::move(out), parts, [s, widths](const Tensor& g, std::span<Tensor* const> p) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          const std::size_t w = widths[k];
          if (p[k]) {
            for (std::size_t o = 0; o < s.outer; ++o) {
              const double* src = g.data().data() + (o * s.extent + off) * s.inner;
              double* dst = p[k]->data().data() + o * w * s.inner;
              for (std::size_t i = 0; i < w * s.inner; ++i) dst[i] += src[i];
            }
          }
          off += w;
        }
      });
}

Var softmax_rows(Var x) {
  Tensor out = kernels::softmax_rows(x.value());
  Tape& tape = x.tape();
  const std::size_t out_id = tape.size();
  return tape.record("softmax", std::move(out), {x},
                     [&tape, out_id](const Tensor& g, std::span<Tensor* const> p) {
                       const Tensor& y = tape.value(out_id);
                       const std::size_t cols = y.shape().back();
                       const std::size_t rows = y.numel() / cols;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) {
                           dot += g[r * cols + j] * y[r * cols + j];
                         }
                         for (std::size_t j = 0; j < cols; ++j) {
                           const std::size_t o = r * cols + j;
                           (*p[0])[o] += y[o] * (g[o] - dot);
                         }
                       }
                     });
}

Var layernorm(Var x, Var gain, Var shift, double eps) {
  kernels::LayerNormResult r = kernels::layernorm(x.value(), gain.value(), shift.value(), eps);
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.value().numel() / cols;
  Tensor xhat = std::move(r.normalized);
  std::vector<double> rstd = std::move(r.rstd);
  return x.tape().record(
      "layernorm", std::move(r.output), {x, gain, shift},
      [gain, xhat = std::move(xhat), rstd = std::move(rstd), cols, rows](
          const Tensor& g, std::span<Tensor* const> p) {
        for (std::size_t row = 0; row < rows; ++row) {
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t o = row * cols + j;
            if (p[1]) (*p[1])[j] += g[o] * xhat[o];
            if (p[2]) (*p[2])[j] += g[o];
          }
        }
        norm_backward(
            xhat, rstd, g, gain.value(), rows, cols,
            [cols](std::size_t r, std::size_t j) { return r * cols + j; },
            [](std::size_t, std::size_t j) { return j; }, p[0]);
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = kernels::gelu(v);
  return x.tape().record("gelu", std::move(out), {x},
                         [x](const Tensor& g, std::span<Tensor* const> p) {
                           for (std::size_t i = 0; i < g.numel(); ++i) {
                             (*p[0])[i] += g[i] * kernels::gelu_derivative(x.value()[i]);
                           }
                         });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record("relu", std::move(out), {x},
                         [x](const Tensor& g, std::span<Tensor* const> p) {
                           for (std::size_t i = 0; i < g.numel(); ++i) {
                             if (x.value()[i] > 0.0) (*p[0])[i] += g[i];
                           }
                         });
}

Var conv2d(Var input, Var weights, std::optional<Var> bias, const ConvSpec& spec) {
  Tensor out = kernels::conv2d(input.value(), weights.value(),
                               bias ? &bias->value() : nullptr, spec);
  std::vector<Var> parents{input, weights};
  if (bias) parents.push_back(*bias);
  return input.tape().record(
      "conv2d", std::move(out), parents,
      [input, weights, spec](const Tensor& g, std::span<Tensor* const> p) {
        kernels::conv2d_backward(input.value(), weights.value(), spec, g, p[0], p[1],
                                 p.size() > 2 ? p[2] : nullptr);
      });
}

Var maxpool2d(Var input, std::size_t window, std::size_t stride) {
  kernels::PoolResult r = kernels::maxpool2d(input.value(), window, stride);
  Tensor out = r.output;
  return input.tape().record("maxpool2d", std::move(out), {input},
                             [r = std::move(r)](const Tensor& g, std::span<Tensor* const> p) {
                               kernels::maxpool2d_backward(r, g, *p[0]);
                             });
}

Var batchnorm2d(Var x, Var gain, Var shift, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ContractViolation("batchnorm2d expects [N,C,H,W]");
  const std::size_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (gain.shape() != Shape{c} || shift.shape() != Shape{c}) {
    throw ContractViolation("batchnorm2d affine shape mismatch");
  }
  const std::size_t count = n * plane;
  auto index = [c, plane](std::size_t ch, std::size_t j) {
    return ((j / plane) * c + ch) * plane + j % plane;
  };
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> rstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t j = 0; j < count; ++j) mean += xv[index(ch, j)];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      const double d = xv[index(ch, j)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(count);
    rstd[ch] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t o = index(ch, j);
      xhat[o] = (xv[o] - mean) * rstd[ch];
      out[o] = xhat[o] * gain.value()[ch] + shift.value()[ch];
    }
  }
  return x.tape().record(
      "batchnorm2d", std::move(out), {x, gain, shift},
      [gain, xhat = std::move(xhat), rstd = std::move(rstd), c, count, index](
          const Tensor& g, std::span<Tensor* const> p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t j = 0; j < count; ++j) {
            const std::size_t o = index(ch, j);
            if (p[1]) (*p[1])[ch] += g[o] * xhat[o];
            if (p[2]) (*p[2])[ch] += g[o];
          }
        }
        norm_backward(xhat, rstd, g, gain.value(), c, count, index,
                      [](std::size_t ch, std::size_t) { return ch; }, p[0]);
      });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractViolation("dropout probability must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(x.shape());
  for (double& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return x.tape().record("dropout", std::move(out), {x},
                         [mask = std::move(mask)](const Tensor& g, std::span<Tensor* const> pg) {
                           for (std::size_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i] * mask[i];
                         });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ContractViolation("cross_entropy expects logits [N,K]");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw ContractViolation("cross_entropy: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractViolation("cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(k) + ")");
    }
  }
  Tensor probs = kernels::softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = z.data().data() + r * k;
    const double row_max = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - row_max);
    loss += row_max + std::log(s) - row[labels[r]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> owned(labels.begin(), labels.end());
  return logits.tape().record(
      "cross_entropy", Tensor::scalar(loss), {logits},
      [probs = std::move(probs), owned = std::move(owned), n, k](const Tensor& g,
                                                                 std::span<Tensor* const> p) {
        const double scale = g[0] / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = static_cast<std::size_t>(owned[r]) == j ? 1.0 : 0.0;
            (*p[0])[r * k + j] += scale * (probs[r * k + j] - onehot);
          }
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x},
                         [](const Tensor& g, std::span<Tensor* const> p) {
                           for (double& v : p[0]->data()) v += g[0];
                         });
}

}  // namespace eit
