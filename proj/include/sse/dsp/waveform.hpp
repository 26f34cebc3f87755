#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sse/core/error.hpp"

namespace sse::dsp {

inline constexpr int kModelSampleRate = 16000;

/// Mono PCM audio.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kModelSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Multi-channel audio as read from disk; channels are equal length.
struct AudioBuffer {
  std::vector<std::vector<float>> channels;
  int sample_rate = kModelSampleRate;

  std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration() const { return static_cast<double>(frames()) / sample_rate; }
};

inline void validate(const Waveform& w) {
  require(w.sample_rate > 0, ErrorCode::InvalidRange, "sample rate must be positive");
  for (float s : w.samples) {
    require(std::isfinite(s), ErrorCode::InvalidRange, "waveform contains non-finite samples");
  }
}

inline float peak(const Waveform& w) {
  float p = 0.0f;
  for (float s : w.samples) p = std::max(p, std::abs(s));
  return p;
}

}  // namespace sse::dsp
