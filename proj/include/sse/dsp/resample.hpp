#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::dsp {

/// Band-limited fractional resampler. The Blackman-windowed sinc kernel is
/// tabulated on a fine grid (polyphase bank) and linearly interpolated
/// between adjacent phases.
class SincResampler {
 public:
  static constexpr int kZeroCrossings = 16;
  static constexpr int kPhasesPerCrossing = 512;

  SincResampler() : table_(static_cast<std::size_t>(kZeroCrossings * kPhasesPerCrossing) + 2) {
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const double u = static_cast<double>(i) / kPhasesPerCrossing;
      table_[i] = u >= kZeroCrossings ? 0.0 : sinc(u) * blackman(u / kZeroCrossings);
    }
  }

  /// Evaluates y[m] = sum_n x[n] * 2fc * h((m*step - n) * 2fc) for m < out_len,
  /// where fc is the cutoff in cycles per input sample (<= 0.5).
  std::vector<float> run(const std::vector<float>& x, double step, std::size_t out_len, double fc) const {
    require(fc > 0.0 && fc <= 0.5, ErrorCode::InvalidRange, "cutoff must lie in (0, 0.5]");
    const double scale = 2.0 * fc;
    const double half_width = kZeroCrossings / scale;
    const auto n_in = static_cast<long long>(x.size());
    std::vector<float> y(out_len, 0.0f);
    for (std::size_t m = 0; m < out_len; ++m) {
      const double t = static_cast<double>(m) * step;
      const long long lo = std::max<long long>(0, static_cast<long long>(std::ceil(t - half_width)));
      const long long hi = std::min<long long>(n_in - 1, static_cast<long long>(std::floor(t + half_width)));
      double acc = 0.0;
      for (long long n = lo; n <= hi; ++n) {
        acc += x[static_cast<std::size_t>(n)] * kernel(std::abs(t - static_cast<double>(n)) * scale);
      }
      y[m] = static_cast<float>(acc * scale);
    }
    return y;
  }

 private:
  static double sinc(double u) {
    if (u == 0.0) return 1.0;
    const double a = std::numbers::pi * u;
    return std::sin(a) / a;
  }

  // Symmetric Blackman window over r in [-1, 1], evaluated at |r|.
  static double blackman(double r) {
    const double a = std::numbers::pi * r;
    return 0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
  }

  double kernel(double u) const {
    const double pos = u * kPhasesPerCrossing;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= table_.size()) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return table_[i] + frac * (table_[i + 1] - table_[i]);
  }

  std::vector<double> table_;
};

inline const SincResampler& default_resampler() {
  static const SincResampler r;
  return r;
}

/// Stretches or compresses a signal to out_len samples by reading it at a
/// constant rate (in_len / out_len). Low-passes when reading faster than 1x.
inline std::vector<float> resample_to_length(const std::vector<float>& x, std::size_t out_len) {
  if (x.empty() || out_len == 0) return std::vector<float>(out_len, 0.0f);
  if (out_len == x.size()) return x;
  const double step = static_cast<double>(x.size()) / static_cast<double>(out_len);
  const double fc = 0.5 * std::min(1.0, 1.0 / step) * 0.95;
  return default_resampler().run(x, step, out_len, fc);
}

/// Downsamples to target_rate; the anti-alias cutoff sits at 0.9x the target
/// Nyquist. Same-rate input is returned unchanged.
inline Waveform resample_to_mono(const Waveform& wave, int target_rate) {
  require(!wave.empty(), ErrorCode::EmptySignal, "cannot resample an empty signal");
  require(target_rate > 0 && wave.sample_rate > 0, ErrorCode::UnsupportedRate, "rates must be positive");
  require(target_rate <= wave.sample_rate, ErrorCode::UnsupportedRate,
          "upsampling from " + std::to_string(wave.sample_rate) + " Hz is not supported");
  if (target_rate == wave.sample_rate) return wave;

  const double step = static_cast<double>(wave.sample_rate) / target_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(wave.size()) * target_rate / wave.sample_rate));
  const double fc = 0.9 * 0.5 * target_rate / wave.sample_rate;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = default_resampler().run(wave.samples, step, out_len, fc);
  return out;
}

inline Waveform mix_to_mono(const AudioBuffer& audio) {
  require(!audio.channels.empty() && audio.frames() > 0, ErrorCode::EmptySignal, "no audio frames");
  Waveform mono;
  mono.sample_rate = audio.sample_rate;
  mono.samples.assign(audio.frames(), 0.0f);
  const auto inv = 1.0 / static_cast<double>(audio.channels.size());
  for (std::size_t i = 0; i < mono.samples.size(); ++i) {
    double acc = 0.0;
    for (const auto& ch : audio.channels) acc += ch[i];
    mono.samples[i] = static_cast<float>(acc * inv);
  }
  return mono;
}

/// Channels are averaged first, then the mono signal is downsampled.
inline Waveform resample_to_mono(const AudioBuffer& audio, int target_rate) {
  require(audio.frames() > 0, ErrorCode::EmptySignal, "cannot resample an empty signal");
  require(target_rate <= audio.sample_rate, ErrorCode::UnsupportedRate,
          "upsampling from " + std::to_string(audio.sample_rate) + " Hz is not supported");
  return resample_to_mono(mix_to_mono(audio), target_rate);
}

}  // namespace sse::dsp
