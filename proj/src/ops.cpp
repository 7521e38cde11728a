#include "feed/ops.hpp"

#include <cmath>

#include "feed/errors.hpp"

namespace feed {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

Index leading(const Tensor& x) { return x.rank() == 0 ? 1 : x.dim(0); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_result(a.shape(), a.data() + b.data(), {a, b}, "add",
                     [](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += g;
                       if (gi[1]) *gi[1] += g;
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_result(a.shape(), a.data() - b.data(), {a, b}, "sub",
                     [](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += g;
                       if (gi[1]) *gi[1] -= g;
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return make_result(a.shape(), a.data().cwiseProduct(b.data()), {a, b}, "mul",
                     [a, b](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += g.cwiseProduct(b.data());
                       if (gi[1]) *gi[1] += g.cwiseProduct(a.data());
                     });
}

Tensor scale(const Tensor& a, float c) {
  return make_result(a.shape(), a.data() * c, {a}, "scale",
                     [c](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += c * g;
                     });
}

Tensor relu(const Tensor& x) {
  return make_result(x.shape(), x.data().cwiseMax(0.0f), {x}, "relu",
                     [x](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) {
                         *gi[0] += (x.data().array() > 0.0f).select(g, 0.0f).matrix();
                       }
                     });
}

Tensor abs(const Tensor& x) {
  return make_result(x.shape(), x.data().cwiseAbs(), {x}, "abs",
                     [x](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) {
                         // sign(0) = 0
                         *gi[0] += g.cwiseProduct(x.data().array().sign().matrix());
                       }
                     });
}

Tensor square(const Tensor& x) {
  return make_result(x.shape(), x.data().cwiseAbs2(), {x}, "square",
                     [x](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += 2.0f * g.cwiseProduct(x.data());
                     });
}

Tensor sum(const Tensor& x) {
  return make_result(Shape{}, Vector::Constant(1, x.data().sum()), {x}, "sum",
                     [](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) gi[0]->array() += g[0];
                     });
}

Tensor mean(const Tensor& x) {
  const Index n = x.numel();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return make_result(Shape{}, Vector::Constant(1, x.data().mean()), {x}, "mean",
                     [n](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) gi[0]->array() += g[0] / static_cast<float>(n);
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw DimensionError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  return make_result(std::move(shape), x.data(), {x}, "reshape",
                     [](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += g;
                     });
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten: needs rank >= 1, got " + x.shape().str());
  const Index n = x.dim(0);
  return reshape(x, Shape{n, n == 0 ? 0 : x.numel() / n});
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: expected [N,C,H,W], got " + x.shape().str());
  const Index nc = x.dim(0) * x.dim(1);
  const Index hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw DimensionError("global_avg_pool: empty spatial extent " + x.shape().str());
  ConstRowMap in(x.data().data(), nc, hw);
  Vector out = in.rowwise().mean();
  return make_result(Shape{x.dim(0), x.dim(1)}, std::move(out), {x}, "global_avg_pool",
                     [nc, hw](const Vector& g, std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       RowMap d(gi[0]->data(), nc, hw);
                       d.colwise() += g / static_cast<float>(hw);
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + x.shape().str() + " incompatible with weight " +
                         weight.shape().str());
  }
  const Index n = x.dim(0), d = x.dim(1), k = weight.dim(0);
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != k)) {
    throw DimensionError("linear: bias " + bias.shape().str() + " incompatible with weight " +
                         weight.shape().str());
  }
  ConstRowMap xm(x.data().data(), n, d);
  ConstRowMap wm(weight.data().data(), k, d);
  RowMatrix out = xm * wm.transpose();
  if (has_bias) out.rowwise() += bias.data().transpose();
  Vector flat = Eigen::Map<Vector>(out.data(), n * k);
  return make_result(Shape{n, k}, std::move(flat), {x, weight, bias}, "linear",
                     [x, weight, n, d, k](const Vector& g, std::span<Vector*> gi) {
                       ConstRowMap gm(g.data(), n, k);
                       if (gi[0]) {
                         RowMap(gi[0]->data(), n, d).noalias() +=
                             gm * ConstRowMap(weight.data().data(), k, d);
                       }
                       if (gi[1]) {
                         RowMap(gi[1]->data(), k, d).noalias() +=
                             gm.transpose() * ConstRowMap(x.data().data(), n, d);
                       }
                       if (gi[2]) *gi[2] += gm.colwise().sum().transpose();
                     });
}

namespace {

// Row-wise log-softmax of z / T with max subtraction.
RowMatrix log_softmax_rows(ConstRowMap z, float temperature) {
  RowMatrix s = z / temperature;
  s.colwise() -= s.rowwise().maxCoeff();
  const Eigen::VectorXf lse = s.array().exp().rowwise().sum().log().matrix();
  s.colwise() -= lse;
  return s;
}

void require_logits(const char* op, const Tensor& logits, float temperature) {
  if (logits.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected logits [N,K], got " + logits.shape().str());
  }
  if (!(temperature > 0.0f)) {
    throw ParameterError(std::string(op) + ": temperature must be positive, got " +
                         std::to_string(temperature));
  }
}

}  // namespace

Tensor softmax(const Tensor& logits, float temperature) {
  require_logits("softmax", logits, temperature);
  const Index n = logits.dim(0), k = logits.dim(1);
  RowMatrix p = log_softmax_rows(ConstRowMap(logits.data().data(), n, k), temperature)
                    .array()
                    .exp()
                    .matrix();
  Vector flat = Eigen::Map<Vector>(p.data(), n * k);
  Vector probs = flat;
  return make_result(logits.shape(), std::move(flat), {logits}, "softmax",
                     [probs = std::move(probs), n, k, temperature](const Vector& g,
                                                                   std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       ConstRowMap pm(probs.data(), n, k);
                       ConstRowMap gm(g.data(), n, k);
                       const Eigen::VectorXf dot = pm.cwiseProduct(gm).rowwise().sum();
                       RowMatrix d = gm;
                       d.colwise() -= dot;
                       RowMap(gi[0]->data(), n, k) += pm.cwiseProduct(d) / temperature;
                     });
}

Tensor log_softmax(const Tensor& logits, float temperature) {
  require_logits("log_softmax", logits, temperature);
  const Index n = logits.dim(0), k = logits.dim(1);
  RowMatrix ls = log_softmax_rows(ConstRowMap(logits.data().data(), n, k), temperature);
  Vector flat = Eigen::Map<Vector>(ls.data(), n * k);
  Vector probs = flat.array().exp().matrix();
  return make_result(logits.shape(), std::move(flat), {logits}, "log_softmax",
                     [probs = std::move(probs), n, k, temperature](const Vector& g,
                                                                   std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       ConstRowMap pm(probs.data(), n, k);
                       ConstRowMap gm(g.data(), n, k);
                       RowMatrix d = -pm;
                       d.array().colwise() *= gm.rowwise().sum().array();
                       d += gm;
                       RowMap(gi[0]->data(), n, k) += d / temperature;
                     });
}

namespace {

void check_norm_order(int p) {
  if (p != 1 && p != 2) throw ParameterError("norm order must be 1 or 2, got " + std::to_string(p));
}

}  // namespace

Tensor reduce_norm(const Tensor& x, int p) {
  check_norm_order(p);
  if (x.numel() == 0) throw DimensionError("reduce_norm of empty tensor");
  const float value = p == 2 ? x.data().norm() : x.data().lpNorm<1>();
  return make_result(Shape{}, Vector::Constant(1, value), {x}, "reduce_norm",
                     [x, p, value](const Vector& g, std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       if (p == 1) {
                         *gi[0] += g[0] * x.data().array().sign().matrix();
                       } else if (value > 0.0f) {
                         *gi[0] += (g[0] / value) * x.data();
                       }
                     });
}

Tensor norm_per_sample(const Tensor& x, int p) {
  check_norm_order(p);
  if (x.rank() < 1 || x.numel() == 0) {
    throw DimensionError("norm_per_sample: needs a nonempty [N,...] tensor, got " + x.shape().str());
  }
  const Index n = x.dim(0);
  const Index d = x.numel() / n;
  ConstRowMap xm(x.data().data(), n, d);
  Vector norms = p == 2 ? Vector(xm.rowwise().norm()) : Vector(xm.cwiseAbs().rowwise().sum());
  Vector saved = norms;
  return make_result(Shape{n}, std::move(norms), {x}, "norm_per_sample",
                     [x, p, n, d, saved = std::move(saved)](const Vector& g,
                                                            std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       ConstRowMap xm(x.data().data(), n, d);
                       RowMap dx(gi[0]->data(), n, d);
                       for (Index i = 0; i < n; ++i) {
                         if (p == 1) {
                           dx.row(i) += g[i] * xm.row(i).array().sign().matrix();
                         } else if (saved[i] > 0.0f) {
                           dx.row(i) += (g[i] / saved[i]) * xm.row(i);
                         }
                       }
                     });
}

Tensor l2_normalize(const Tensor& x, float eps, bool per_sample) {
  if (!(eps > 0.0f)) throw ParameterError("l2_normalize: eps must be positive");
  if (x.numel() == 0) throw DimensionError("l2_normalize of empty tensor " + x.shape().str());
  const Index rows = per_sample ? leading(x) : 1;
  const Index d = x.numel() / rows;
  ConstRowMap xm(x.data().data(), rows, d);
  Vector norms = xm.rowwise().norm();
  RowMatrix y = xm;
  for (Index i = 0; i < rows; ++i) y.row(i) /= norms[i] + eps;
  Vector flat = Eigen::Map<Vector>(y.data(), rows * d);
  return make_result(
      x.shape(), std::move(flat), {x}, "l2_normalize",
      [x, rows, d, eps, norms = std::move(norms)](const Vector& g, std::span<Vector*> gi) {
        if (!gi[0]) return;
        ConstRowMap xm(x.data().data(), rows, d);
        ConstRowMap gm(g.data(), rows, d);
        RowMap dx(gi[0]->data(), rows, d);
        for (Index i = 0; i < rows; ++i) {
          const float r = norms[i];
          const float denom = r + eps;
          dx.row(i) += gm.row(i) / denom;
          if (r > 0.0f) {
            const float proj = gm.row(i).dot(xm.row(i));
            dx.row(i) -= (proj / (denom * denom * r)) * xm.row(i);
          }
        }
      });
}

Tensor shortcut_pad(const Tensor& x, Index out_channels, int stride) {
  if (x.rank() != 4) throw DimensionError("shortcut_pad: expected [N,C,H,W], got " + x.shape().str());
  if (stride < 1) throw ParameterError("shortcut_pad: stride must be positive");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_channels < c) {
    throw DimensionError("shortcut_pad: cannot shrink " + std::to_string(c) + " channels to " +
                         std::to_string(out_channels));
  }
  const Index oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  const Index front = (out_channels - c) / 2;
  Vector out = Vector::Zero(n * out_channels * oh * ow);
  const float* src = x.data().data();
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j)
          out[((b * out_channels + ch + front) * oh + i) * ow + j] =
              src[((b * c + ch) * h + i * stride) * w + j * stride];
  return make_result(Shape{n, out_channels, oh, ow}, std::move(out), {x}, "shortcut_pad",
                     [=](const Vector& g, std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       float* dst = gi[0]->data();
                       for (Index b = 0; b < n; ++b)
                         for (Index ch = 0; ch < c; ++ch)
                           for (Index i = 0; i < oh; ++i)
                             for (Index j = 0; j < ow; ++j)
                               dst[((b * c + ch) * h + i * stride) * w + j * stride] +=
                                   g[((b * out_channels + ch + front) * oh + i) * ow + j];
                     });
}

RunningStats RunningStats::identity(Index channels) {
  return RunningStats{Vector::Zero(channels), Vector::Ones(channels)};
}

}  // namespace feed
