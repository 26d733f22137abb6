#pragma once

#include <cstddef>
#include <vector>

#include "eit/tensor.hpp"

namespace eit {

// 2D convolution geometry. Weights are laid out [out, in/groups, kh, kw] and
// grouped convolution partitions channels contiguously.
struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  static ConvSpec depthwise(std::size_t channels, std::size_t kernel, std::size_t padding) {
    return {kernel, kernel, 1, padding, channels, channels, channels};
  }

  void validate() const;
  Shape weight_shape() const;
  bool is_depthwise() const { return groups == in_channels && groups == out_channels; }
};

// floor((in + 2p - k) / s) + 1. Throws GeometryError when in + 2p < k.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);
// floor((in - window) / stride) + 1. Throws GeometryError when window > in.
std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride);

namespace kernels {

// input [N, C_in, H, W] -> [N, C_out, H', W']. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              const ConvSpec& spec);
// Accumulates into whichever gradient pointers are non-null.
void conv2d_backward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias);

struct PoolResult {
  Tensor output;
  // Flat input offset of the first row-major maximum of each output element.
  std::vector<std::size_t> argmax;
};

PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);
void maxpool2d_backward(const PoolResult& forward, const Tensor& grad_out, Tensor& grad_input);

// a [..., M, K] times b [K, N] (shared) or b [..., K, N] (same leading dims).
Tensor matmul(const Tensor& a, const Tensor& b);
// Gradients of matmul; b_shared mirrors the forward broadcast.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a,
                     Tensor* grad_b);

// Softmax over the trailing axis, stabilised by subtracting the row maximum.
Tensor softmax_rows(const Tensor& x);

struct LayerNormResult {
  Tensor output;
  Tensor normalized;         // (x - mean) * rstd, before the affine map
  std::vector<double> rstd;  // one per normalised row
};

// Normalises over the trailing axis with population variance.
LayerNormResult layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps);

// Exact Gaussian-CDF GELU.
double gelu(double x);
double gelu_derivative(double x);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);

}  // namespace kernels
}  // namespace eit
