#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include <unsupported/Eigen/FFT>

#include "sse/core/error.hpp"

namespace sse::dsp {

using Complex = std::complex<double>;

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

constexpr std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Real-input FFT of a fixed power-of-two size n; the n/2 + 1 non-negative
/// frequency bins, e^{-i...} kernel, unscaled forward.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    require(is_power_of_two(n) && n >= 4, ErrorCode::InvalidRange, "real FFT size must be a power of two >= 4");
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<Complex> out) const {
    fft_.fwd(out.data(), in.data(), static_cast<Eigen::Index>(n_));
  }

  /// Inverse of forward(); scaled so inverse(forward(x)) == x.
  void inverse(std::span<const Complex> in, std::span<double> out) const {
    fft_.inv(out.data(), in.data(), static_cast<Eigen::Index>(n_));
  }

 private:
  std::size_t n_;
  mutable Eigen::FFT<double> fft_;  // caches twiddles per size
};

}  // namespace sse::dsp
