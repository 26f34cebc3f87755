#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/mel.hpp"

namespace sse::dsp {

inline constexpr std::size_t kDefaultMfccCount = 20;

/// Orthonormal DCT-II basis, n_out x n_in, row-major.
inline std::vector<double> dct2_matrix(std::size_t n_out, std::size_t n_in) {
  std::vector<double> m(n_out * n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      m[k * n_in + i] = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return m;
}

inline std::vector<double> dct2_orthonormal(std::span<const double> x, std::size_t n_out) {
  const auto basis = dct2_matrix(n_out, x.size());
  std::vector<double> y(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) y[k] += basis[k * x.size() + i] * x[i];
  }
  return y;
}

/// Inverse of the full orthonormal DCT-II (i.e. its transpose, DCT-III).
inline std::vector<double> idct2_orthonormal(std::span<const double> c) {
  const std::size_t n = c.size();
  const auto basis = dct2_matrix(n, n);
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) x[i] += basis[k * n + i] * c[k];
  }
  return x;
}

/// One coefficient vector per frame.
inline std::vector<std::vector<double>> mfcc(const LogMelSpectrogram& logmel,
                                             std::size_t n_coeffs = kDefaultMfccCount) {
  require(n_coeffs <= logmel.n_mels, ErrorCode::InvalidRange,
          "cannot take " + std::to_string(n_coeffs) + " coefficients from " + std::to_string(logmel.n_mels) + " bands");
  const auto basis = dct2_matrix(n_coeffs, logmel.n_mels);
  std::vector<std::vector<double>> out(logmel.n_frames, std::vector<double>(n_coeffs, 0.0));
  for (std::size_t t = 0; t < logmel.n_frames; ++t) {
    const auto frame = logmel.frame(t);
    for (std::size_t k = 0; k < n_coeffs; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < logmel.n_mels; ++i) acc += basis[k * logmel.n_mels + i] * frame[i];
      out[t][k] = acc;
    }
  }
  return out;
}

}  // namespace sse::dsp
