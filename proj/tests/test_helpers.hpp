#pragma once

// Independent oracles shared by the unit tests. These deliberately use the
// slowest obvious formulation so they cannot share bugs with the library.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::testing {

inline dsp::Waveform sine(double freq, double seconds, int rate, double amp = 0.5, double phase = 0.0) {
  dsp::Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase));
  }
  return w;
}

/// Naive DFT magnitude at an arbitrary (possibly fractional) bin of a real signal.
inline double dft_magnitude(const std::vector<float>& x, double freq_hz, int rate) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate;
    acc += static_cast<double>(x[i]) * std::complex<double>(std::cos(a), std::sin(a));
  }
  return std::abs(acc);
}

/// Frequency (Hz) of the strongest full-length DFT bin between lo and hi,
/// scanned at the signal's native bin spacing.
inline double dominant_frequency(const std::vector<float>& x, int rate, double lo_hz, double hi_hz) {
  const double spacing = static_cast<double>(rate) / static_cast<double>(x.size());
  double best_f = lo_hz;
  double best = -1.0;
  for (double f = std::floor(lo_hz / spacing) * spacing; f <= hi_hz; f += spacing) {
    const double m = dft_magnitude(x, f, rate);
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  return best_f;
}

/// Coarse-to-fine version for long signals: scans with a given step then refines.
inline double dominant_frequency_fast(const std::vector<float>& x, int rate, double lo_hz, double hi_hz,
                                      double coarse_step = 2.0) {
  double best_f = lo_hz;
  double best = -1.0;
  for (double f = lo_hz; f <= hi_hz; f += coarse_step) {
    const double m = dft_magnitude(x, f, rate);
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  const double fine = coarse_step / 40.0;
  const double center = best_f;
  for (double f = center - coarse_step; f <= center + coarse_step; f += fine) {
    const double m = dft_magnitude(x, f, rate);
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  return best_f;
}

template <typename F>
ErrorCode error_code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected an sse::Error");
}

}  // namespace sse::testing
