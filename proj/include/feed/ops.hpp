#pragma once

#include <span>

#include "feed/tensor.hpp"

namespace feed {

enum class Mode { Train, Eval };

// Elementwise; operands must share a shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(float c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, float c) { return scale(a, c); }

// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

// x[N,D] * weight[K,D]^T + bias[K]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation, NCHW. An empty bias (numel 0) means no bias term.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

struct RunningStats {
  Vector mean;
  Vector var;

  // Zero mean, unit variance.
  static RunningStats identity(Index channels);
};

// Per-channel batch normalization over (N,H,W). In train mode the batch
// statistics are used and `stats` is updated by an exponential moving average
// with the unbiased batch variance; eval mode reads `stats` only.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Vector& running_mean, Vector& running_var, Mode mode, float momentum = 0.1f,
                  float eps = 1e-5f);

inline Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         RunningStats& stats, Mode mode, float momentum = 0.1f,
                         float eps = 1e-5f) {
  return batch_norm(input, gamma, beta, stats.mean, stats.var, mode, momentum, eps);
}

// Row-wise softmax of logits[N,K] / temperature.
Tensor softmax(const Tensor& logits, float temperature = 1.0f);
Tensor log_softmax(const Tensor& logits, float temperature = 1.0f);

// sqrt(sum x^2) for p = 2, sum |x| for p = 1, over every element. Subgradient
// 0 at non-differentiable points.
Tensor reduce_norm(const Tensor& x, int p);

// Same as reduce_norm but one value per leading index: [N, ...] -> [N].
Tensor norm_per_sample(const Tensor& x, int p);

// x / (||x||_2 + eps), norm taken per leading index (per_sample) or over the
// whole tensor.
Tensor l2_normalize(const Tensor& x, float eps, bool per_sample = true);

// Parameter-free residual shortcut: spatial subsampling by `stride` and zero
// padding of the channel axis to `out_channels`, split evenly on both sides.
Tensor shortcut_pad(const Tensor& x, Index out_channels, int stride);

}  // namespace feed
