#pragma once

// Straight-line reference implementations used as test oracles. They share no
// code with the library: every loop is written out over plain indices.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "eit/params.hpp"
#include "eit/rng.hpp"
#include "eit/tensor.hpp"

namespace oracle {

using eit::Tensor;

inline Tensor random_tensor(eit::Shape shape, eit::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::size_t pick(eit::Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// input [N, Cin, H, W], weights [Cout, Cin/groups, kh, kw].
inline Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor* bias, std::size_t stride,
                     std::size_t pad, std::size_t groups) {
  const std::size_t n = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t in_per_group = cin / groups, out_per_group = cout / groups;
  Tensor out({n, cout, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias ? (*bias)[co] : 0.0;
          const std::size_t g = co / out_per_group;
          for (std::size_t ci = 0; ci < in_per_group; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + j) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += in.at({b, g * in_per_group + ci, static_cast<std::size_t>(iy),
                              static_cast<std::size_t>(ix)}) *
                       w.at({co, ci, i, j});
              }
          out.at({b, co, y, x}) = acc;
        }
  return out;
}

inline Tensor maxpool2d(const Tensor& in, std::size_t window, std::size_t stride) {
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor out({n, c, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double m = -INFINITY;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j)
              m = std::max(m, in.at({b, ch, y * stride + i, x * stride + j}));
          out.at({b, ch, y, x}) = m;
        }
  return out;
}

// a [M, K] times b [K, N].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at({i, p}) * b.at({p, j});
      out.at({i, j}) = acc;
    }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  std::vector<double> out(row.size());
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) total += out[i] = std::exp(row[i] - m);
  for (double& v : out) v /= total;
  return out;
}

// ---- single-image transformer pieces on [T][C] matrices ---------------------

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const Tensor& t, std::size_t image) {
  const std::size_t rows = t.dim(1), cols = t.dim(2);
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.at({image, r, c});
  return m;
}

inline Matrix layernorm(const Matrix& x, const Tensor& gain, const Tensor& shift,
                        double eps = 1e-6) {
  Matrix out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0.0;
    for (double v : x[r]) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t c = 0; c < x[r].size(); ++c)
      out[r][c] = (x[r][c] - mean) / std::sqrt(var + eps) * gain[c] + shift[c];
  }
  return out;
}

// x [T][in] * w [in, out] + b [out]
inline Matrix linear(const Matrix& x, const Tensor& w, const Tensor& b) {
  const std::size_t out_dim = w.dim(1);
  Matrix out(x.size(), std::vector<double>(out_dim));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < x[r].size(); ++i) acc += x[r][i] * w.at({i, o});
      out[r][o] = acc;
    }
  return out;
}

inline Matrix columns(const Matrix& x, std::size_t begin, std::size_t end) {
  Matrix out(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) out[r].assign(x[r].begin() + begin, x[r].begin() + end);
  return out;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

// Multi-head attention with parameters "<prefix>.qkv.*" / "<prefix>.proj.*".
// The qkv output columns are [q | k | v], each split into contiguous heads.
inline Matrix attention(const Matrix& x, const eit::ModelParams& p, const std::string& prefix,
                        std::size_t heads) {
  const std::size_t t = x.size(), width = x[0].size(), d = width / heads;
  const Matrix qkv = linear(x, p.get(prefix + ".qkv.weight"), p.get(prefix + ".qkv.bias"));
  Matrix merged(t, std::vector<double>(width, 0.0));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> logits(t);
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += qkv[i][hd * d + e] * qkv[j][width + hd * d + e];
        logits[j] = dot / std::sqrt(static_cast<double>(d));
      }
      const std::vector<double> a = softmax(logits);
      for (std::size_t e = 0; e < d; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t; ++j) acc += a[j] * qkv[j][2 * width + hd * d + e];
        merged[i][hd * d + e] = acc;
      }
    }
  }
  return linear(merged, p.get(prefix + ".proj.weight"), p.get(prefix + ".proj.bias"));
}

// Depthwise k x k convolution (zero padding k/2) of the patch tokens on a
// gh x gw grid; row 0 (class token) is copied through.
inline Matrix depthwise_tokens(const Matrix& x, const Tensor& w, const Tensor& b, std::size_t gh,
                               std::size_t gw) {
  const std::size_t k = w.dim(2);
  const long half = static_cast<long>(k / 2);
  Matrix out = x;
  for (std::size_t c = 0; c < x[0].size(); ++c)
    for (std::size_t y = 0; y < gh; ++y)
      for (std::size_t xx = 0; xx < gw; ++xx) {
        double acc = b[c];
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const long sy = static_cast<long>(y + i) - half;
            const long sx = static_cast<long>(xx + j) - half;
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(gh) || sx >= static_cast<long>(gw))
              continue;
            acc += x[1 + static_cast<std::size_t>(sy) * gw + static_cast<std::size_t>(sx)][c] *
                   w.at({c, 0, i, j});
          }
        out[1 + y * gw + xx][c] = acc;
      }
  return out;
}

inline Matrix mlp_residual(const Matrix& y, const eit::ModelParams& p, const std::string& prefix) {
  Matrix h = layernorm(y, p.get(prefix + ".norm2.gain"), p.get(prefix + ".norm2.shift"));
  h = linear(h, p.get(prefix + ".mlp.fc1.weight"), p.get(prefix + ".mlp.fc1.bias"));
  for (auto& row : h)
    for (double& v : row) v = gelu(v);
  h = linear(h, p.get(prefix + ".mlp.fc2.weight"), p.get(prefix + ".mlp.fc2.bias"));
  Matrix z = y;
  for (std::size_t r = 0; r < z.size(); ++r)
    for (std::size_t c = 0; c < z[r].size(); ++c) z[r][c] += h[r][c];
  return z;
}

// Plain ViT encoder layer: x + MHA(LN(x)), then + MLP(LN(.)).
inline Matrix vit_layer(const Matrix& x, const eit::ModelParams& p, std::size_t layer,
                        std::size_t heads) {
  const std::string prefix = "layers." + std::to_string(layer);
  const Matrix a = attention(layernorm(x, p.get(prefix + ".norm1.gain"), p.get(prefix + ".norm1.shift")),
                             p, prefix + ".attn", heads);
  Matrix y = x;
  for (std::size_t r = 0; r < y.size(); ++r)
    for (std::size_t c = 0; c < y[r].size(); ++c) y[r][c] += a[r][c];
  return mlp_residual(y, p, prefix);
}

// Split layer: depthwise conv on the first conv_channels, attention on the
// last attn_channels, spliced as [conv ; attn].
inline Matrix eit_layer(const Matrix& x, const eit::ModelParams& p, std::size_t layer,
                        std::size_t heads, std::size_t conv_channels, std::size_t attn_channels,
                        std::size_t gh, std::size_t gw) {
  const std::string prefix = "layers." + std::to_string(layer);
  const std::size_t width = x[0].size();
  const Matrix n = layernorm(x, p.get(prefix + ".norm1.gain"), p.get(prefix + ".norm1.shift"));
  const Matrix conv = depthwise_tokens(columns(n, 0, conv_channels),
                                       p.get(prefix + ".eitt.conv0.weight"),
                                       p.get(prefix + ".eitt.conv0.bias"), gh, gw);
  const Matrix attn = attention(columns(n, width - attn_channels, width), p, prefix + ".attn", heads);
  Matrix y = x;
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (std::size_t c = 0; c < conv_channels; ++c) y[r][c] += conv[r][c];
    for (std::size_t c = 0; c < attn_channels; ++c) y[r][conv_channels + c] += attn[r][c];
  }
  return mlp_residual(y, p, prefix);
}

// ---- diagnostics --------------------------------------------------------------

// attention [heads, T, T]. For each patch query, the attention over patch keys
// is renormalised, weighted by Euclidean grid distance times spacing, and the
// result averaged over queries.
inline std::vector<double> attention_distance(const Tensor& attention, std::size_t gh,
                                              std::size_t gw, double spacing) {
  const std::size_t heads = attention.dim(0), patches = gh * gw;
  std::vector<double> out(heads, 0.0);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    double total = 0.0;
    for (std::size_t qy = 0; qy < gh; ++qy)
      for (std::size_t qx = 0; qx < gw; ++qx) {
        double mass = 0.0, weighted = 0.0;
        for (std::size_t ky = 0; ky < gh; ++ky)
          for (std::size_t kx = 0; kx < gw; ++kx) {
            const double a = attention.at({hd, 1 + qy * gw + qx, 1 + ky * gw + kx});
            const double dy = static_cast<double>(qy) - static_cast<double>(ky);
            const double dx = static_cast<double>(qx) - static_cast<double>(kx);
            mass += a;
            weighted += a * std::hypot(dy, dx) * spacing;
          }
        total += weighted / mass;
      }
    out[hd] = total / static_cast<double>(patches);
  }
  return out;
}

// Direct 2D DFT magnitude of a real h x w grid.
inline std::vector<double> dft_magnitude(const std::vector<double>& grid, std::size_t h,
                                         std::size_t w) {
  std::vector<double> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double phase = -2.0 * M_PI *
                               (static_cast<double>(u * y) / static_cast<double>(h) +
                                static_cast<double>(v * x) / static_cast<double>(w));
          acc += grid[y * w + x] * std::polar(1.0, phase);
        }
      out[u * w + v] = std::abs(acc);
    }
  return out;
}

}  // namespace oracle
