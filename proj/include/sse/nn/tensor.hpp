#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sse/core/error.hpp"

namespace sse::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major array.
template <typename Real>
struct Tensor {
  Shape shape;
  std::vector<Real> values;

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0)) : shape(std::move(s)), values(numel(shape), fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  Real* data() { return values.data(); }
  const Real* data() const { return values.data(); }
  Real& operator[](std::size_t i) { return values[i]; }
  Real operator[](std::size_t i) const { return values[i]; }
  std::span<Real> span() { return values; }
  std::span<const Real> span() const { return values; }

  void zero() { std::fill(values.begin(), values.end(), Real(0)); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const std::string& what) {
  require(a.shape == b.shape, ErrorCode::ShapeMismatch,
          what + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

}  // namespace sse::nn
