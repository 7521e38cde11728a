#include <algorithm>
#include <cstring>

#include "feed/errors.hpp"
#include "feed/ops.hpp"

namespace feed {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  Index n, c, h, w;   // input
  Index k, kh, kw;    // filters
  Index oh, ow;       // output
  int stride, pad;

  Index patch() const { return c * kh * kw; }
  Index plane() const { return oh * ow; }
};

// Floats of im2col scratch per chunk; keeps the column buffer cache-sized
// while still giving the GEMM enough columns.
constexpr Index kColumnBudget = 1 << 18;

Index chunk_size(const ConvGeometry& g) {
  const Index per_sample = std::max<Index>(1, g.patch() * g.plane());
  return std::clamp<Index>(kColumnBudget / per_sample, 1, g.n);
}

// Zero-padded copy of samples [first, first+count): [count, C, H+2p, W+2p].
void pad_chunk(const ConvGeometry& g, const float* input, Index first, Index count,
               Vector& padded) {
  const Index hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  padded.setZero(count * g.c * hp * wp);
  for (Index plane = 0; plane < count * g.c; ++plane) {
    const float* src = input + (first * g.c + plane) * g.h * g.w;
    float* dst = padded.data() + plane * hp * wp + g.pad * wp + g.pad;
    for (Index y = 0; y < g.h; ++y) std::copy_n(src + y * g.w, g.w, dst + y * wp);
  }
}

// Columns [b * plane, (b + 1) * plane) of `col` receive sample `first + b`.
void im2col(const ConvGeometry& g, const float* input, Index first, Index count, Vector& padded,
            RowMatrix& col) {
  pad_chunk(g, input, first, count, padded);
  const Index hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  const Index cols = count * g.plane();
  col.resize(g.patch(), cols);
  for (Index b = 0; b < count; ++b) {
    for (Index ch = 0; ch < g.c; ++ch) {
      const float* img = padded.data() + (b * g.c + ch) * hp * wp;
      for (Index ki = 0; ki < g.kh; ++ki) {
        for (Index kj = 0; kj < g.kw; ++kj) {
          float* dst = col.data() + ((ch * g.kh + ki) * g.kw + kj) * cols + b * g.plane();
          const float* src = img + ki * wp + kj;
          if (g.stride == 1) {
            for (Index oy = 0; oy < g.oh; ++oy, dst += g.ow, src += wp)
              for (Index ox = 0; ox < g.ow; ++ox) dst[ox] = src[ox];
          } else {
            for (Index oy = 0; oy < g.oh; ++oy, dst += g.ow, src += g.stride * wp)
              for (Index ox = 0; ox < g.ow; ++ox) dst[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

// Scatter-add of `col` into the padded staging buffer, then crop into grad.
void col2im(const ConvGeometry& g, const RowMatrix& col, Index first, Index count,
            Vector& padded, float* grad) {
  const Index hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  const Index cols = count * g.plane();
  padded.setZero(count * g.c * hp * wp);
  for (Index b = 0; b < count; ++b) {
    for (Index ch = 0; ch < g.c; ++ch) {
      float* img = padded.data() + (b * g.c + ch) * hp * wp;
      for (Index ki = 0; ki < g.kh; ++ki) {
        for (Index kj = 0; kj < g.kw; ++kj) {
          const float* src = col.data() + ((ch * g.kh + ki) * g.kw + kj) * cols + b * g.plane();
          float* dst = img + ki * wp + kj;
          if (g.stride == 1) {
            for (Index oy = 0; oy < g.oh; ++oy, src += g.ow, dst += wp)
              for (Index ox = 0; ox < g.ow; ++ox) dst[ox] += src[ox];
          } else {
            for (Index oy = 0; oy < g.oh; ++oy, src += g.ow, dst += g.stride * wp)
              for (Index ox = 0; ox < g.ow; ++ox) dst[ox * g.stride] += src[ox];
          }
        }
      }
    }
  }
  for (Index plane = 0; plane < count * g.c; ++plane) {
    const float* src = padded.data() + plane * hp * wp + g.pad * wp + g.pad;
    float* dst = grad + (first * g.c + plane) * g.h * g.w;
    for (Index y = 0; y < g.h; ++y) {
      for (Index x = 0; x < g.w; ++x) dst[y * g.w + x] += src[y * wp + x];
    }
  }
}

// [K, count*plane] <-> NCHW slab for samples [first, first+count).
void scatter_output(const ConvGeometry& g, const RowMatrix& y, Index first, Index count,
                    float* out) {
  for (Index b = 0; b < count; ++b)
    for (Index f = 0; f < g.k; ++f)
      std::memcpy(out + ((first + b) * g.k + f) * g.plane(),
                  y.data() + f * y.cols() + b * g.plane(), sizeof(float) * g.plane());
}

void gather_output(const ConvGeometry& g, const float* grad, Index first, Index count,
                   RowMatrix& y) {
  y.resize(g.k, count * g.plane());
  for (Index b = 0; b < count; ++b)
    for (Index f = 0; f < g.k; ++f)
      std::memcpy(y.data() + f * y.cols() + b * g.plane(),
                  grad + ((first + b) * g.k + f) * g.plane(), sizeof(float) * g.plane());
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d: expected input [N,C,H,W] and weight [K,C,kh,kw], got " +
                         input.shape().str() + " and " + weight.shape().str());
  }
  if (stride < 1) throw ParameterError("conv2d: stride must be positive");
  if (padding < 0) throw ParameterError("conv2d: padding must be nonnegative");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), 0, 0, stride, padding};
  if (weight.dim(1) != g.c || g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: input " + input.shape().str() + " incompatible with weight " +
                         weight.shape().str() + " at padding " + std::to_string(padding));
  }
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.k)) {
    throw DimensionError("conv2d: bias " + bias.shape().str() + " incompatible with weight " +
                         weight.shape().str());
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  Vector out(g.n * g.k * g.plane());
  ConstRowMap wm(weight.data().data(), g.k, g.patch());
  RowMatrix col, y;
  Vector padded;
  const Index chunk = chunk_size(g);
  for (Index first = 0; first < g.n; first += chunk) {
    const Index count = std::min(chunk, g.n - first);
    im2col(g, input.data().data(), first, count, padded, col);
    y.noalias() = wm * col;
    if (has_bias) y.colwise() += bias.data();
    scatter_output(g, y, first, count, out.data());
  }

  return make_result(
      Shape{g.n, g.k, g.oh, g.ow}, std::move(out), {input, weight, bias}, "conv2d",
      [input, weight, g, chunk](const Vector& grad, std::span<Vector*> gi) {
        ConstRowMap wm(weight.data().data(), g.k, g.patch());
        RowMatrix col, gy, dcol;
        Vector padded;
        for (Index first = 0; first < g.n; first += chunk) {
          const Index count = std::min(chunk, g.n - first);
          gather_output(g, grad.data(), first, count, gy);
          if (gi[2]) *gi[2] += gy.rowwise().sum();
          if (gi[1]) {
            im2col(g, input.data().data(), first, count, padded, col);
            RowMap(gi[1]->data(), g.k, g.patch()).noalias() += gy * col.transpose();
          }
          if (gi[0]) {
            dcol.noalias() = wm.transpose() * gy;
            col2im(g, dcol, first, count, padded, gi[0]->data());
          }
        }
      });
}

}  // namespace feed
