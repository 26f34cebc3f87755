#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/fft.hpp"
#include "sse/dsp/resample.hpp"
#include "sse/dsp/stft.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::augment {

inline constexpr std::size_t kVocoderFftSize = 2048;
inline constexpr std::size_t kVocoderHop = 512;
inline constexpr double kMinStretch = 0.25;
inline constexpr double kMaxStretch = 4.0;
inline constexpr double kMaxSemitones = 12.0;

namespace detail {

inline double wrap_phase(double p) {
  return p - 2.0 * std::numbers::pi * std::round(p / (2.0 * std::numbers::pi));
}

}  // namespace detail

/// Phase-vocoder time stretch. factor > 1 shortens (speeds up) the signal;
/// the output has round(n / factor) samples. Analysis frames are read at
/// fractional positions t * factor with linearly interpolated magnitudes and
/// per-bin phase propagation; no phase locking.
inline dsp::Waveform time_stretch(const dsp::Waveform& wave, double factor) {
  require(factor > kMinStretch && factor < kMaxStretch, ErrorCode::InvalidFactor,
          "stretch factor " + std::to_string(factor) + " outside (0.25, 4)");
  const std::size_t n_fft = kVocoderFftSize;
  const std::size_t hop = kVocoderHop;
  const std::size_t n_bins = n_fft / 2 + 1;
  const std::size_t pad = n_fft / 2;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(wave.size()) / factor));

  dsp::Waveform out;
  out.sample_rate = wave.sample_rate;
  if (wave.empty() || out_len == 0) {
    out.samples.assign(out_len, 0.0f);
    return out;
  }

  // Centre the frames by zero-padding half a window on both sides, and
  // extend to at least one full frame.
  std::vector<float> padded(pad, 0.0f);
  padded.insert(padded.end(), wave.samples.begin(), wave.samples.end());
  padded.resize(std::max(padded.size() + pad, pad + n_fft), 0.0f);
  const auto spec = dsp::stft(std::span<const float>(padded), wave.sample_rate, n_fft, hop);

  std::vector<double> mags(spec.bins.size()), phases(spec.bins.size());
  for (std::size_t i = 0; i < spec.bins.size(); ++i) {
    mags[i] = std::abs(spec.bins[i]);
    phases[i] = std::arg(spec.bins[i]);
  }

  // Synthesis frames needed to cover out_len samples of centred output.
  const std::size_t n_out_frames = (out_len + 2 * pad - n_fft) / hop + 2;
  std::vector<double> phase_acc(phases.begin(), phases.begin() + static_cast<long>(n_bins));
  std::vector<double> expected(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    expected[k] = 2.0 * std::numbers::pi * static_cast<double>(hop * k) / static_cast<double>(n_fft);
  }

  const dsp::RealFft fft(n_fft);
  const auto window = dsp::hann_window(n_fft);
  std::vector<double> acc((n_out_frames - 1) * hop + n_fft, 0.0);
  std::vector<double> norm(acc.size(), 0.0);
  std::vector<dsp::Complex> frame(n_bins);
  std::vector<double> time(n_fft);
  const std::size_t last = spec.n_frames - 1;

  for (std::size_t t = 0; t < n_out_frames; ++t) {
    const double pos = static_cast<double>(t) * factor;
    const std::size_t i0 = std::min(static_cast<std::size_t>(pos), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double alpha = pos >= static_cast<double>(last) ? 0.0 : pos - static_cast<double>(i0);
    const double* ma = &mags[i0 * n_bins];
    const double* mb = &mags[i1 * n_bins];
    const double* pa = &phases[i0 * n_bins];
    const double* pb = &phases[i1 * n_bins];
    for (std::size_t k = 0; k < n_bins; ++k) {
      frame[k] = std::polar((1.0 - alpha) * ma[k] + alpha * mb[k], phase_acc[k]);
      phase_acc[k] += expected[k] + detail::wrap_phase(pb[k] - pa[k] - expected[k]);
    }
    fft.inverse(frame, time);
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) {
      acc[start + i] += time[i] * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }

  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t j = i + pad;
    const double v = j < acc.size() && norm[j] > 1e-8 ? acc[j] / norm[j] : 0.0;
    out.samples[i] = static_cast<float>(v);
  }
  return out;
}

/// Transposes by 2^(semitones/12): stretch to r times the duration, then read
/// back r times faster to the original length.
inline dsp::Waveform pitch_shift(const dsp::Waveform& wave, double semitones) {
  require(std::abs(semitones) <= kMaxSemitones, ErrorCode::InvalidShift,
          "pitch shift of " + std::to_string(semitones) + " semitones outside [-12, 12]");
  if (semitones == 0.0) {
    // Still resynthesise so the 0-semitone case carries the same vocoder path.
    auto stretched = time_stretch(wave, 1.0);
    stretched.samples.resize(wave.size(), 0.0f);
    return stretched;
  }
  const double ratio = std::pow(2.0, semitones / 12.0);
  const auto stretched = time_stretch(wave, 1.0 / ratio);
  dsp::Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples = dsp::resample_to_length(stretched.samples, wave.size());
  return out;
}

}  // namespace sse::augment
