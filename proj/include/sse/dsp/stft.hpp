#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/fft.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::dsp {

inline constexpr std::size_t kDefaultFftSize = 2048;
inline constexpr std::size_t kDefaultHop = 1024;

/// Periodic Hann window; at 50% overlap the shifted copies sum to exactly one.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

/// Time-major complex STFT: frame t holds bins 0..fft_size/2 of the windowed
/// segment starting at t * hop.
struct Spectrogram {
  std::size_t n_frames = 0;
  std::size_t fft_size = kDefaultFftSize;
  std::size_t hop = kDefaultHop;
  int sample_rate = kModelSampleRate;
  std::vector<Complex> bins;

  std::size_t n_bins() const { return fft_size / 2 + 1; }
  std::span<const Complex> frame(std::size_t t) const { return {bins.data() + t * n_bins(), n_bins()}; }
  std::span<Complex> frame(std::size_t t) { return {bins.data() + t * n_bins(), n_bins()}; }
  double magnitude(std::size_t t, std::size_t k) const { return std::abs(bins[t * n_bins() + k]); }
};

constexpr std::size_t stft_frame_count(std::size_t n_samples, std::size_t fft_size, std::size_t hop) {
  return n_samples < fft_size ? 0 : (n_samples - fft_size) / hop + 1;
}

/// Frames are fully interior: no centering or padding.
inline Spectrogram stft(std::span<const float> samples, int sample_rate, std::size_t fft_size = kDefaultFftSize,
                        std::size_t hop = kDefaultHop) {
  require(hop > 0, ErrorCode::InvalidRange, "hop must be positive");
  require(samples.size() >= fft_size, ErrorCode::SignalTooShort,
          "signal of " + std::to_string(samples.size()) + " samples is shorter than the FFT size " +
              std::to_string(fft_size));
  const RealFft fft(fft_size);
  const auto window = hann_window(fft_size);

  Spectrogram spec;
  spec.fft_size = fft_size;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.n_frames = stft_frame_count(samples.size(), fft_size, hop);
  spec.bins.resize(spec.n_frames * spec.n_bins());

  std::vector<double> buf(fft_size);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < fft_size; ++i) buf[i] = samples[start + i] * window[i];
    fft.forward(buf, spec.frame(t));
  }
  return spec;
}

inline Spectrogram stft(const Waveform& wave, std::size_t fft_size = kDefaultFftSize, std::size_t hop = kDefaultHop) {
  return stft(std::span<const float>(wave.samples), wave.sample_rate, fft_size, hop);
}

}  // namespace sse::dsp
