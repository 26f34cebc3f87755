#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/stft.hpp"

namespace sse::dsp {

inline constexpr double kLogFloor = 1e-6;
inline constexpr double kDefaultFMin = 20.0;

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  double f_min = kDefaultFMin;
  double f_max = 0.0;
  std::vector<double> weights;  // n_mels x n_bins, row-major

  double weight(std::size_t m, std::size_t k) const { return weights[m * n_bins + k]; }
  std::span<const double> row(std::size_t m) const { return {weights.data() + m * n_bins, n_bins}; }
};

/// Triangular filters with peaks equally spaced in mel between mel(f_min)
/// and mel(Nyquist). Slopes are linear in mel; peak weight is one.
inline MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate,
                                    double f_min = kDefaultFMin) {
  require(n_mels >= 1, ErrorCode::InvalidRange, "need at least one mel band");
  const double nyquist = 0.5 * sample_rate;
  require(f_min >= 0.0 && f_min < nyquist, ErrorCode::InvalidRange, "f_min must lie below the Nyquist frequency");

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = fft_size / 2 + 1;
  fb.f_min = f_min;
  fb.f_max = nyquist;
  fb.weights.assign(n_mels * fb.n_bins, 0.0);

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(nyquist);
  const double spacing = (mel_hi - mel_lo) / static_cast<double>(n_mels + 1);
  for (std::size_t k = 0; k < fb.n_bins; ++k) {
    const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
    const double mel = hz_to_mel(hz);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double left = mel_lo + spacing * static_cast<double>(m);
      const double center = left + spacing;
      const double right = center + spacing;
      double w = 0.0;
      if (mel > left && mel <= center) {
        w = (mel - left) / spacing;
      } else if (mel > center && mel < right) {
        w = (right - mel) / spacing;
      }
      fb.weights[m * fb.n_bins + k] = w;
    }
  }
  return fb;
}

/// Time-major log mel energies.
struct LogMelSpectrogram {
  std::size_t n_frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;  // n_frames x n_mels

  double at(std::size_t t, std::size_t m) const { return values[t * n_mels + m]; }
  std::span<const double> frame(std::size_t t) const { return {values.data() + t * n_mels, n_mels}; }
};

/// log(fb . |X_t| + eps) per frame.
inline LogMelSpectrogram log_mel(const Spectrogram& spec, const MelFilterbank& fb, double eps = kLogFloor) {
  require(fb.n_bins == spec.n_bins(), ErrorCode::ShapeMismatch,
          "filterbank has " + std::to_string(fb.n_bins) + " bins, spectrogram has " + std::to_string(spec.n_bins()));
  LogMelSpectrogram out;
  out.n_frames = spec.n_frames;
  out.n_mels = fb.n_mels;
  out.values.resize(out.n_frames * out.n_mels);

  // Only the nonzero span of each filter contributes.
  std::vector<std::size_t> first(fb.n_mels, 0), last(fb.n_mels, 0);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const auto row = fb.row(m);
    auto lo = std::find_if(row.begin(), row.end(), [](double w) { return w != 0.0; });
    auto hi = std::find_if(row.rbegin(), row.rend(), [](double w) { return w != 0.0; });
    first[m] = static_cast<std::size_t>(lo - row.begin());
    last[m] = lo == row.end() ? first[m] : static_cast<std::size_t>(row.rend() - hi);
  }

  std::vector<double> mag(spec.n_bins());
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    const auto frame = spec.frame(t);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(frame[k]);
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const auto row = fb.row(m);
      double e = 0.0;
      for (std::size_t k = first[m]; k < last[m]; ++k) e += row[k] * mag[k];
      out.values[t * out.n_mels + m] = std::log(e + eps);
    }
  }
  return out;
}

}  // namespace sse::dsp
