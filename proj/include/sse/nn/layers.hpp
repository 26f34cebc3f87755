#pragma once

// Layer kernels with hand-derived backward passes. Activations are NCHW.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sse/nn/tensor.hpp"

namespace sse::nn {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMatrix<Real>>;
template <typename Real>
using ArrMap = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using ConstArrMap = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;

// Reductions are written as plain loops: Eigen's vectorized reductions peel
// by buffer address, so their rounding would depend on heap placement.
namespace detail {

template <typename Real>
double sum(const Real* p, std::size_t n, std::size_t stride = 1) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(p[i * stride]);
  return s;
}

template <typename Real>
double dot(const Real* a, const Real* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename Real>
double squared_deviation(const Real* p, std::size_t n, double m) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - m;
    s += d * d;
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 2-D convolution, stride 1, zero "same" padding (odd kernels).

namespace detail {

template <typename Real>
void im2col(const Real* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, Real* col) {
  const auto pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        Real* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          Real* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, Real(0));
            continue;
          }
          const Real* src = x + (c * h + static_cast<std::size_t>(sy)) * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx) + dx;
            dst[xx] = (sx < 0 || sx >= static_cast<long>(w)) ? Real(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im_add(const Real* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, Real* x) {
  const auto pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const Real* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          Real* dst = x + (c * h + static_cast<std::size_t>(sy)) * w;
          const Real* src = row + y * w;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx) + dx;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += src[xx];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// x [B, Ci, H, W], weight [Co, Ci, k, k], bias [Co] or empty.
template <typename Real>
Tensor<Real> conv2d_forward(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>* bias) {
  require(x.shape.size() == 4 && weight.shape.size() == 4 && x.dim(1) == weight.dim(1), ErrorCode::ShapeMismatch,
          "conv2d input " + shape_string(x.shape) + " vs weight " + shape_string(weight.shape));
  const std::size_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = weight.dim(0), k = weight.dim(2);
  const std::size_t hw = h * w, kk = ci * k * k;
  Tensor<Real> y({b, co, h, w});
  std::vector<Real> col(kk * hw);
  ConstMatMap<Real> wm(weight.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(kk));
  for (std::size_t n = 0; n < b; ++n) {
    const Real* xn = x.data() + n * ci * hw;
    MatMap<Real> yn(y.data() + n * co * hw, static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(hw));
    if (k == 1) {
      yn.noalias() = wm * ConstMatMap<Real>(xn, static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(hw));
    } else {
      detail::im2col(xn, ci, h, w, k, col.data());
      yn.noalias() = wm * ConstMatMap<Real>(col.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(hw));
    }
    if (bias != nullptr) {
      for (std::size_t c = 0; c < co; ++c) yn.row(static_cast<Eigen::Index>(c)).array() += (*bias)[c];
    }
  }
  return y;
}

/// Accumulates into dweight / dbias (which must be pre-sized); writes dx if non-null.
template <typename Real>
void conv2d_backward(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& dy, Tensor<Real>* dx,
                     Tensor<Real>& dweight, Tensor<Real>* dbias) {
  const std::size_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = weight.dim(0), k = weight.dim(2);
  const std::size_t hw = h * w, kk = ci * k * k;
  std::vector<Real> col(kk * hw);
  std::vector<Real> dcol(kk * hw);
  ConstMatMap<Real> wm(weight.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(kk));
  MatMap<Real> dwm(dweight.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(kk));
  if (dx != nullptr) *dx = Tensor<Real>(x.shape);
  for (std::size_t n = 0; n < b; ++n) {
    const Real* xn = x.data() + n * ci * hw;
    ConstMatMap<Real> dyn(dy.data() + n * co * hw, static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(hw));
    const Real* colp = xn;
    if (k != 1) {
      detail::im2col(xn, ci, h, w, k, col.data());
      colp = col.data();
    }
    ConstMatMap<Real> colm(colp, static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(hw));
    dwm.noalias() += dyn * colm.transpose();
    if (dbias != nullptr) {
      for (std::size_t c = 0; c < co; ++c) (*dbias)[c] += static_cast<Real>(detail::sum(dyn.data() + c * hw, hw));
    }
    if (dx != nullptr) {
      if (k == 1) {
        MatMap<Real>(dx->data() + n * ci * hw, static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(hw)).noalias() =
            wm.transpose() * dyn;
      } else {
        MatMap<Real>(dcol.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(hw)).noalias() =
            wm.transpose() * dyn;
        detail::col2im_add(dcol.data(), ci, h, w, k, dx->data() + n * ci * hw);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Batch normalisation over a feature axis of x viewed as [outer, F, inner].

template <typename Real>
struct BatchNormCache {
  Tensor<Real> xhat;
  std::vector<Real> inv_std;
  std::vector<double> mean;
  std::vector<double> var;  // biased batch variance
};

struct BnLayout {
  std::size_t outer = 0;
  std::size_t features = 0;
  std::size_t inner = 0;
};

template <typename Real>
Tensor<Real> batchnorm_forward_train(const Tensor<Real>& x, BnLayout lay, const Tensor<Real>& gamma,
                                     const Tensor<Real>& beta, double eps, BatchNormCache<Real>& cache) {
  const std::size_t f_count = lay.features;
  const auto inner = static_cast<Eigen::Index>(lay.inner);
  const double count = static_cast<double>(lay.outer * lay.inner);
  auto row = [&](std::size_t o, std::size_t f) { return ConstArrMap<Real>(x.data() + (o * f_count + f) * lay.inner, inner); };
  cache.mean.assign(f_count, 0.0);
  cache.var.assign(f_count, 0.0);
  cache.inv_std.assign(f_count, Real(0));
  // Per-row two-pass moments (the row stays in cache), merged exactly:
  // M2 = sum_r [M2_r + n_r (mean_r - mean)^2].
  const double n_row = static_cast<double>(lay.inner);
  std::vector<double> row_mean(lay.outer * f_count), row_m2(lay.outer * f_count);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const Real* r = x.data() + (o * f_count + f) * lay.inner;
      const double m = detail::sum(r, lay.inner) / n_row;
      row_mean[o * f_count + f] = m;
      row_m2[o * f_count + f] = detail::squared_deviation(r, lay.inner, m);
      cache.mean[f] += m;
    }
  }
  for (auto& m : cache.mean) m /= static_cast<double>(lay.outer);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const double d = row_mean[o * f_count + f] - cache.mean[f];
      cache.var[f] += row_m2[o * f_count + f] + n_row * d * d;
    }
  }
  for (std::size_t f = 0; f < f_count; ++f) {
    cache.var[f] /= count;
    cache.inv_std[f] = static_cast<Real>(1.0 / std::sqrt(cache.var[f] + eps));
  }
  cache.xhat = Tensor<Real>(x.shape);
  Tensor<Real> y(x.shape);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const std::size_t off = (o * f_count + f) * lay.inner;
      ArrMap<Real> xh(cache.xhat.data() + off, inner);
      xh = (row(o, f) - static_cast<Real>(cache.mean[f])) * cache.inv_std[f];
      ArrMap<Real>(y.data() + off, inner) = xh * gamma[f] + beta[f];
    }
  }
  return y;
}

template <typename Real>
Tensor<Real> batchnorm_forward_inference(const Tensor<Real>& x, BnLayout lay, const Tensor<Real>& gamma,
                                         const Tensor<Real>& beta, const Tensor<Real>& running_mean,
                                         const Tensor<Real>& running_var, double eps) {
  Tensor<Real> y(x.shape);
  for (std::size_t f = 0; f < lay.features; ++f) {
    const Real is = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var[f]) + eps));
    const Real scale = gamma[f] * is;
    const Real shift = beta[f] - running_mean[f] * scale;
    for (std::size_t o = 0; o < lay.outer; ++o) {
      const std::size_t off = (o * lay.features + f) * lay.inner;
      for (std::size_t i = 0; i < lay.inner; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
  return y;
}

/// dgamma / dbeta are accumulated.
template <typename Real>
Tensor<Real> batchnorm_backward(const Tensor<Real>& dy, BnLayout lay, const Tensor<Real>& gamma,
                                const BatchNormCache<Real>& cache, Tensor<Real>& dgamma, Tensor<Real>& dbeta) {
  const std::size_t f_count = lay.features;
  const auto inner = static_cast<Eigen::Index>(lay.inner);
  const double count = static_cast<double>(lay.outer * lay.inner);
  std::vector<double> sum_dy(f_count, 0.0), sum_dy_xhat(f_count, 0.0);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const std::size_t off = (o * f_count + f) * lay.inner;
      sum_dy[f] += detail::sum(dy.data() + off, lay.inner);
      sum_dy_xhat[f] += detail::dot(dy.data() + off, cache.xhat.data() + off, lay.inner);
    }
  }
  for (std::size_t f = 0; f < f_count; ++f) {
    dgamma[f] += static_cast<Real>(sum_dy_xhat[f]);
    dbeta[f] += static_cast<Real>(sum_dy[f]);
  }
  // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
  Tensor<Real> dx(dy.shape);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t f = 0; f < f_count; ++f) {
      const std::size_t off = (o * f_count + f) * lay.inner;
      const auto scale = static_cast<Real>(static_cast<double>(gamma[f]) * cache.inv_std[f]);
      const auto mdy = static_cast<Real>(sum_dy[f] / count);
      const auto mdyx = static_cast<Real>(sum_dy_xhat[f] / count);
      ArrMap<Real>(dx.data() + off, inner) =
          scale * (ConstArrMap<Real>(dy.data() + off, inner) - mdy - ConstArrMap<Real>(cache.xhat.data() + off, inner) * mdyx);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename Real>
void relu_inplace(Tensor<Real>& x) {
  for (auto& v : x.values) v = v > Real(0) ? v : Real(0);
}

/// Gradient through ReLU given its output (mask is output > 0).
template <typename Real>
void relu_backward_inplace(const Tensor<Real>& y, Tensor<Real>& dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y[i] > Real(0))) dy[i] = Real(0);
  }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// argmax holds the flat input index of each output's winner (first max wins).
template <typename Real>
Tensor<Real> maxpool2x2_forward(const Tensor<Real>& x, std::vector<std::uint32_t>& argmax) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  require(oh > 0 && ow > 0, ErrorCode::ShapeMismatch, "feature map too small to pool: " + shape_string(x.shape));
  Tensor<Real> y({b, c, oh, ow});
  argmax.resize(y.size());
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    const std::size_t in_off = plane * h * w;
    const std::size_t out_off = plane * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = in_off + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_off + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[out_off + oy * ow + ox] = x[best];
        argmax[out_off + oy * ow + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

template <typename Real>
Tensor<Real> maxpool2x2_backward(const Tensor<Real>& dy, const std::vector<std::uint32_t>& argmax,
                                 const Shape& input_shape) {
  Tensor<Real> dx(input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

/// [B, C, H, W] -> [B, C]
template <typename Real>
Tensor<Real> global_avg_pool_forward(const Tensor<Real>& x) {
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<Real> y({b, c});
  for (std::size_t i = 0; i < b * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x[i * hw + j];
    y[i] = static_cast<Real>(s / static_cast<double>(hw));
  }
  return y;
}

template <typename Real>
Tensor<Real> global_avg_pool_backward(const Tensor<Real>& dy, const Shape& input_shape) {
  Tensor<Real> dx(input_shape);
  const std::size_t hw = input_shape[2] * input_shape[3];
  const Real inv = Real(1) / static_cast<Real>(hw);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    for (std::size_t j = 0; j < hw; ++j) dx[i * hw + j] = dy[i] * inv;
  }
  return dx;
}

/// x [B, In], weight [Out, In], bias [Out] -> [B, Out]
template <typename Real>
Tensor<Real> dense_forward(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  require(x.shape.size() == 2 && x.dim(1) == weight.dim(1), ErrorCode::ShapeMismatch,
          "dense input " + shape_string(x.shape) + " vs weight " + shape_string(weight.shape));
  const auto b = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(weight.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  Tensor<Real> y({x.dim(0), weight.dim(0)});
  MatMap<Real> ym(y.data(), b, out);
  ym.noalias() = ConstMatMap<Real>(x.data(), b, in) * ConstMatMap<Real>(weight.data(), out, in).transpose();
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < out; ++j) ym(i, j) += bias[static_cast<std::size_t>(j)];
  }
  return y;
}

/// Accumulates dweight / dbias; returns dx.
template <typename Real>
Tensor<Real> dense_backward(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& dy,
                            Tensor<Real>& dweight, Tensor<Real>& dbias) {
  const auto b = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(weight.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  ConstMatMap<Real> dym(dy.data(), b, out);
  ConstMatMap<Real> xm(x.data(), b, in);
  MatMap<Real>(dweight.data(), out, in).noalias() += dym.transpose() * xm;
  for (Eigen::Index j = 0; j < out; ++j) {
    dbias[static_cast<std::size_t>(j)] += static_cast<Real>(
        detail::sum(dy.data() + j, static_cast<std::size_t>(b), static_cast<std::size_t>(out)));
  }
  Tensor<Real> dx(x.shape);
  MatMap<Real>(dx.data(), b, in).noalias() = dym * ConstMatMap<Real>(weight.data(), out, in);
  return dx;
}

inline constexpr double kNormFloor = 1e-12;

/// Row-wise z / max(||z||, 1e-12); norms receives the pre-floor row norms.
template <typename Real>
Tensor<Real> l2_normalize_forward(const Tensor<Real>& z, std::vector<double>& norms) {
  const std::size_t b = z.dim(0), d = z.dim(1);
  Tensor<Real> e(z.shape);
  norms.assign(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(z[i * d + j]) * z[i * d + j];
    norms[i] = std::sqrt(s);
    const double denom = std::max(norms[i], kNormFloor);
    for (std::size_t j = 0; j < d; ++j) e[i * d + j] = static_cast<Real>(z[i * d + j] / denom);
  }
  return e;
}

/// dz = (I - e e^T) de / ||z||
template <typename Real>
Tensor<Real> l2_normalize_backward(const Tensor<Real>& e, const std::vector<double>& norms, const Tensor<Real>& de) {
  const std::size_t b = e.dim(0), d = e.dim(1);
  Tensor<Real> dz(e.shape);
  for (std::size_t i = 0; i < b; ++i) {
    const double denom = std::max(norms[i], kNormFloor);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(e[i * d + j]) * de[i * d + j];
    if (norms[i] < kNormFloor) dot = 0.0;  // below the floor the map is linear
    for (std::size_t j = 0; j < d; ++j) {
      dz[i * d + j] = static_cast<Real>((de[i * d + j] - e[i * d + j] * dot) / denom);
    }
  }
  return dz;
}

}  // namespace sse::nn
