#include "eit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "eit/errors.hpp"

namespace eit {

void ConvSpec::validate() const {
  if (kernel_h == 0 || kernel_w == 0 || stride == 0 || groups == 0 || in_channels == 0 ||
      out_channels == 0) {
    throw ContractViolation("conv spec has a zero extent");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ContractViolation("conv channels (in " + std::to_string(in_channels) + ", out " +
                            std::to_string(out_channels) + ") not divisible by groups " +
                            std::to_string(groups));
  }
}

Shape ConvSpec::weight_shape() const {
  return {out_channels, in_channels / groups, kernel_h, kernel_w};
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw GeometryError("stride must be positive");
  if (in + 2 * padding < kernel) {
    throw GeometryError("extent " + std::to_string(in) + " with padding " +
                        std::to_string(padding) + " is smaller than kernel " +
                        std::to_string(kernel));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (stride == 0 || window == 0) throw GeometryError("pool window and stride must be positive");
  if (window > in) {
    throw GeometryError("pool window " + std::to_string(window) + " exceeds extent " +
                        std::to_string(in));
  }
  return (in - window) / stride + 1;
}

namespace kernels {

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weights, const Tensor* bias,
                       const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 4) {
    throw ContractViolation("conv2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  }
  if (input.dim(1) != spec.in_channels) {
    throw ContractViolation("conv2d input channels " + std::to_string(input.dim(1)) +
                            " != spec in_channels " + std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ContractViolation("conv2d weight shape " + shape_str(weights.shape()) +
                            " != expected " + shape_str(spec.weight_shape()));
  }
  if (bias && bias->shape() != Shape{spec.out_channels}) {
    throw ContractViolation("conv2d bias shape " + shape_str(bias->shape()) + " != [" +
                            std::to_string(spec.out_channels) + "]");
  }
}

// Iterates every (output position, kernel tap) pair that lands inside the
// input, calling fn(out_offset, in_offset, weight_offset).
template <typename Fn>
void for_each_conv_tap(const Shape& in_shape, const ConvSpec& spec, std::size_t out_h,
                       std::size_t out_w, Fn&& fn) {
  const std::size_t n_batch = in_shape[0];
  const std::size_t in_h = in_shape[2];
  const std::size_t in_w = in_shape[3];
  const std::size_t cin_per_group = spec.in_channels / spec.groups;
  const std::size_t cout_per_group = spec.out_channels / spec.groups;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);

  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      const std::size_t group = oc / cout_per_group;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const std::size_t out_off = ((n * spec.out_channels + oc) * out_h + oy) * out_w + ox;
          for (std::size_t icg = 0; icg < cin_per_group; ++icg) {
            const std::size_t ic = group * cin_per_group + icg;
            for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * spec.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
              for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * spec.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
                const std::size_t in_off =
                    ((n * spec.in_channels + ic) * in_h + static_cast<std::size_t>(iy)) * in_w +
                    static_cast<std::size_t>(ix);
                const std::size_t w_off =
                    ((oc * cin_per_group + icg) * spec.kernel_h + ky) * spec.kernel_w + kx;
                fn(out_off, in_off, w_off);
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              const ConvSpec& spec) {
  check_conv_shapes(input, weights, bias, spec);
  const std::size_t out_h = conv_output_extent(input.dim(2), spec.kernel_h, spec.stride,
                                               spec.padding);
  const std::size_t out_w = conv_output_extent(input.dim(3), spec.kernel_w, spec.stride,
                                               spec.padding);
  Tensor out({input.dim(0), spec.out_channels, out_h, out_w});
  if (bias) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t n = 0; n < input.dim(0); ++n) {
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        double* dst = out.data().data() + (n * spec.out_channels + c) * plane;
        std::fill(dst, dst + plane, (*bias)[c]);
      }
    }
  }
  const double* x = input.data().data();
  const double* w = weights.data().data();
  double* y = out.data().data();
  for_each_conv_tap(input.shape(), spec, out_h, out_w,
                    [&](std::size_t o, std::size_t i, std::size_t k) { y[o] += x[i] * w[k]; });
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias) {
  check_conv_shapes(input, weights, nullptr, spec);
  const std::size_t out_h = grad_out.dim(2);
  const std::size_t out_w = grad_out.dim(3);
  const double* x = input.data().data();
  const double* w = weights.data().data();
  const double* g = grad_out.data().data();
  double* gx = grad_input ? grad_input->data().data() : nullptr;
  double* gw = grad_weights ? grad_weights->data().data() : nullptr;
  if (gx || gw) {
    for_each_conv_tap(input.shape(), spec, out_h, out_w,
                      [&](std::size_t o, std::size_t i, std::size_t k) {
                        if (gx) gx[i] += g[o] * w[k];
                        if (gw) gw[k] += g[o] * x[i];
                      });
  }
  if (grad_bias) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t n = 0; n < grad_out.dim(0); ++n) {
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        const double* src = g + (n * spec.out_channels + c) * plane;
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += src[p];
        (*grad_bias)[c] += acc;
      }
    }
  }
}

PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  if (input.rank() != 4) {
    throw ContractViolation("maxpool2d input must be [N,C,H,W], got " +
                            shape_str(input.shape()));
  }
  const std::size_t in_h = input.dim(2);
  const std::size_t in_w = input.dim(3);
  const std::size_t out_h = pool_output_extent(in_h, window, stride);
  const std::size_t out_w = pool_output_extent(in_w, window, stride);
  const std::size_t planes = input.dim(0) * input.dim(1);

  PoolResult result{Tensor({input.dim(0), input.dim(1), out_h, out_w}), {}};
  result.argmax.resize(result.output.numel());
  const double* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t best = p * in_h * in_w + (oy * stride) * in_w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t off = p * in_h * in_w + (oy * stride + ky) * in_w + ox * stride + kx;
            if (x[off] > x[best]) best = off;
          }
        }
        const std::size_t out_off = (p * out_h + oy) * out_w + ox;
        result.output[out_off] = x[best];
        result.argmax[out_off] = best;
      }
    }
  }
  return result;
}

void maxpool2d_backward(const PoolResult& forward, const Tensor& grad_out, Tensor& grad_input) {
  for (std::size_t i = 0; i < forward.argmax.size(); ++i) {
    grad_input[forward.argmax[i]] += grad_out[i];
  }
}

namespace {

struct MatmulDims {
  std::size_t batch;
  std::size_t m, k, n;
  bool b_shared;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ContractViolation("matmul operands need rank >= 2: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
  }
  MatmulDims d{};
  d.m = a.dim(a.rank() - 2);
  d.k = a.dim(a.rank() - 1);
  const std::size_t bk = b.dim(b.rank() - 2);
  d.n = b.dim(b.rank() - 1);
  if (d.k != bk) {
    throw ContractViolation("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
  }
  d.batch = a.numel() / (d.m * d.k);
  d.b_shared = b.rank() == 2;
  if (!d.b_shared) {
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw ContractViolation("matmul batch extents differ: " + shape_str(a.shape()) + " x " +
                              shape_str(b.shape()));
    }
  }
  return d;
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += g[m,n] * b[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      const double* grow = g + i * n;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * g[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape = a.shape();
  out_shape.back() = d.n;
  Tensor out(out_shape);
  for (std::size_t t = 0; t < d.batch; ++t) {
    const double* bp = b.data().data() + (d.b_shared ? 0 : t * d.k * d.n);
    gemm_nn(a.data().data() + t * d.m * d.k, bp, out.data().data() + t * d.m * d.n, d.m, d.k,
            d.n);
  }
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a,
                     Tensor* grad_b) {
  const MatmulDims d = matmul_dims(a, b);
  for (std::size_t t = 0; t < d.batch; ++t) {
    const double* ap = a.data().data() + t * d.m * d.k;
    const double* bp = b.data().data() + (d.b_shared ? 0 : t * d.k * d.n);
    const double* gp = grad_out.data().data() + t * d.m * d.n;
    if (grad_a) gemm_nt(gp, bp, grad_a->data().data() + t * d.m * d.k, d.m, d.k, d.n);
    if (grad_b) {
      double* gb = grad_b->data().data() + (d.b_shared ? 0 : t * d.k * d.n);
      gemm_tn(ap, gp, gb, d.m, d.k, d.n);
    }
  }
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = x.data().data() + r * cols;
    double* dst = out.data().data() + r * cols;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!std::isfinite(src[j])) {
        throw ContractViolation("softmax_rows received a non-finite input");
      }
      row_max = std::max(row_max, src[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - row_max);
      sum += dst[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) dst[j] *= inv;
  }
  return out;
}

LayerNormResult layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("layernorm eps must be > 0");
  const std::size_t cols = x.shape().back();
  if (gain.shape() != Shape{cols} || shift.shape() != Shape{cols}) {
    throw ContractViolation("layernorm affine shape mismatch for input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / cols;
  LayerNormResult r{Tensor(x.shape()), Tensor(x.shape()), std::vector<double>(rows)};
  for (std::size_t row = 0; row < rows; ++row) {
    const double* src = x.data().data() + row * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += src[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(cols);
    const double rstd = 1.0 / std::sqrt(var + eps);
    r.rstd[row] = rstd;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xhat = (src[j] - mean) * rstd;
      r.normalized[row * cols + j] = xhat;
      r.output[row * cols + j] = xhat * gain[j] + shift[j];
    }
  }
  return r;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank) {
    throw ContractViolation("permute order has wrong rank for " + shape_str(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (perm[i] >= rank || seen[perm[i]]) throw ContractViolation("invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = x.dim(perm[i]);
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.dim(i);
  // Stride in the input of each output axis.
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) src_strides[i] = in_strides[perm[i]];

  Tensor out(out_shape);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  const double* xp = x.data().data();
  for (std::size_t flat = 0; flat < out.numel(); ++flat) {
    out[flat] = xp[src];
    for (std::size_t axis = rank; axis-- > 0;) {
      ++idx[axis];
      src += src_strides[axis];
      if (idx[axis] < out_shape[axis]) break;
      src -= src_strides[axis] * out_shape[axis];
      idx[axis] = 0;
    }
  }
  return out;
}

}  // namespace kernels
}  // namespace eit
