#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/dsp/fft.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::augment {

/// Circular rotation by round(shift * rate) samples; positive shifts delay.
inline dsp::Waveform time_shift(const dsp::Waveform& wave, double shift_s) {
  require(std::abs(shift_s) < wave.duration(), ErrorCode::InvalidShift,
          "shift of " + std::to_string(shift_s) + " s is not shorter than the clip");
  const auto n = static_cast<long long>(wave.size());
  long long s = std::llround(shift_s * wave.sample_rate) % n;
  if (s < 0) s += n;
  dsp::Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.resize(wave.size());
  std::rotate_copy(wave.samples.begin(), wave.samples.end() - s, wave.samples.end(), out.samples.begin());
  return out;
}

/// Linear convolution via zero-padded FFT multiplication, truncated to x.size().
inline std::vector<double> fft_convolve_truncated(const std::vector<float>& x, const std::vector<double>& h) {
  const std::size_t n = dsp::next_power_of_two(std::max<std::size_t>(x.size() + h.size() - 1, 4));
  const dsp::RealFft fft(n);
  std::vector<double> xa(n, 0.0), ha(n, 0.0);
  std::copy(x.begin(), x.end(), xa.begin());
  std::copy(h.begin(), h.end(), ha.begin());
  std::vector<dsp::Complex> xf(fft.bins()), hf(fft.bins());
  fft.forward(xa, xf);
  fft.forward(ha, hf);
  for (std::size_t k = 0; k < xf.size(); ++k) xf[k] *= hf[k];
  fft.inverse(xf, xa);
  xa.resize(x.size());
  return xa;
}

/// Exponentially decaying white-noise impulse response of length
/// min(4 * decay, clip) applied in the frequency domain, mixed at `wet`, and
/// peak-normalised back to the input peak.
inline dsp::Waveform reverb(const dsp::Waveform& wave, double decay_s, double wet, Rng& rng) {
  require(decay_s > 0.0, ErrorCode::InvalidDecay, "reverb decay must be positive");
  require(wet >= 0.0 && wet <= 1.0, ErrorCode::InvalidRange, "wet fraction must lie in [0, 1]");
  if (wet == 0.0 || wave.empty()) return wave;

  const double rate = wave.sample_rate;
  const auto ir_len = std::max<std::size_t>(
      1, std::min(wave.size(), static_cast<std::size_t>(std::llround(4.0 * decay_s * rate))));
  std::vector<double> ir(ir_len);
  for (std::size_t i = 0; i < ir_len; ++i) ir[i] = rng.normal() * std::exp(-static_cast<double>(i) / (decay_s * rate));

  const auto wet_sig = fft_convolve_truncated(wave.samples, ir);
  const double in_peak = dsp::peak(wave);
  double wet_peak = 0.0;
  for (double v : wet_sig) wet_peak = std::max(wet_peak, std::abs(v));
  if (in_peak == 0.0 || wet_peak == 0.0) return wave;

  std::vector<double> mix(wave.size());
  double mix_peak = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix[i] = (1.0 - wet) * wave.samples[i] + wet * wet_sig[i] * (in_peak / wet_peak);
    mix_peak = std::max(mix_peak, std::abs(mix[i]));
  }
  dsp::Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.resize(mix.size());
  const double g = mix_peak > 0.0 ? in_peak / mix_peak : 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) out.samples[i] = static_cast<float>(mix[i] * g);
  return out;
}

/// Adds N(0, sigma^2) noise truncated to +-truncation*sigma by resampling.
/// The result is not clipped.
inline dsp::Waveform add_noise(const dsp::Waveform& wave, double sigma, double truncation, Rng& rng) {
  require(sigma >= 0.0, ErrorCode::InvalidRange, "noise sigma must be non-negative");
  require(truncation > 0.0, ErrorCode::InvalidRange, "truncation must be positive");
  if (sigma == 0.0) return wave;
  dsp::Waveform out = wave;
  for (auto& s : out.samples) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > truncation);
    s = static_cast<float>(s + sigma * z);
  }
  return out;
}

}  // namespace sse::augment
