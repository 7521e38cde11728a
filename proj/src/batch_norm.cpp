#include <cmath>

#include "feed/errors.hpp"
#include "feed/ops.hpp"

namespace feed {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Vector& running_mean, Vector& running_var, Mode mode, float momentum,
                  float eps) {
  if (input.rank() != 4) {
    throw DimensionError("batch_norm: expected [N,C,H,W], got " + input.shape().str());
  }
  const Index n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw DimensionError("batch_norm: input " + input.shape().str() + " vs gamma " +
                         gamma.shape().str() + " / beta " + beta.shape().str());
  }
  const Index m = n * hw;
  if (mode == Mode::Train && m < 1) {
    throw DimensionError("batch_norm: train mode needs N*H*W >= 1, got " + input.shape().str());
  }

  const float* x = input.data().data();
  Vector mu(c), inv_std(c);
  if (mode == Mode::Train) {
    for (Index ch = 0; ch < c; ++ch) {
      // Per-plane float partial sums, accumulated across planes in double.
      double s = 0.0, s2 = 0.0;
      for (Index b = 0; b < n; ++b) {
        s += Eigen::Map<const Vector>(x + (b * c + ch) * hw, hw).sum();
      }
      const double mean = s / static_cast<double>(m);
      const float mean_f = static_cast<float>(mean);
      for (Index b = 0; b < n; ++b) {
        Eigen::Map<const Vector> plane(x + (b * c + ch) * hw, hw);
        s2 += (plane.array() - mean_f).square().sum();
      }
      const double var = s2 / static_cast<double>(m);
      mu[ch] = static_cast<float>(mean);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + eps));
      const double unbiased = m > 1 ? s2 / static_cast<double>(m - 1) : var;
      running_mean[ch] = (1.0f - momentum) * running_mean[ch] + momentum * static_cast<float>(mean);
      running_var[ch] = (1.0f - momentum) * running_var[ch] + momentum * static_cast<float>(unbiased);
    }
  } else {
    mu = running_mean;
    inv_std = (running_var.array() + eps).rsqrt().matrix();
  }

  Vector out(input.numel());
  Vector xhat(input.numel());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      Eigen::Map<const Vector> src(x + off, hw);
      auto xh = xhat.segment(off, hw);
      xh = (src.array() - mu[ch]) * inv_std[ch];
      out.segment(off, hw) = xh.array() * gamma.data()[ch] + beta.data()[ch];
    }
  }

  return make_result(
      input.shape(), std::move(out), {input, gamma, beta}, "batch_norm",
      [gamma, n, c, hw, m, mode, inv_std, xhat = std::move(xhat)](const Vector& g,
                                                                  std::span<Vector*> gi) {
        for (Index ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            sum_g += g.segment(off, hw).sum();
            sum_gx += g.segment(off, hw).dot(xhat.segment(off, hw));
          }
          if (gi[1]) (*gi[1])[ch] += static_cast<float>(sum_gx);
          if (gi[2]) (*gi[2])[ch] += static_cast<float>(sum_g);
          if (!gi[0]) continue;
          const float scale = gamma.data()[ch] * inv_std[ch];
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            auto dx = gi[0]->segment(off, hw);
            if (mode == Mode::Train) {
              const float mean_g = static_cast<float>(sum_g / static_cast<double>(m));
              const float mean_gx = static_cast<float>(sum_gx / static_cast<double>(m));
              dx.array() += scale * (g.segment(off, hw).array() - mean_g -
                                     xhat.segment(off, hw).array() * mean_gx);
            } else {
              dx += scale * g.segment(off, hw);
            }
          }
        }
      });
}

}  // namespace feed
