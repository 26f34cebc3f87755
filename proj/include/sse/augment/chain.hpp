#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include <json.hpp>

#include "sse/augment/effects.hpp"
#include "sse/augment/phase_vocoder.hpp"
#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/dsp/waveform.hpp"

namespace sse::augment {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Enable probabilities and parameter ranges of the stochastic effects chain.
struct EffectChainConfig {
  double p_time_shift = 0.5;
  double p_time_stretch = 0.5;
  double p_pitch_shift = 0.5;
  double p_reverb = 0.5;
  double p_noise = 0.5;

  double time_shift_max = 5.0;           // seconds, drawn from [-max, max]
  Range stretch_range{0.8, 1.25};        // factor > 1 speeds up
  Range pitch_range{-2.0, 2.0};          // semitones
  Range reverb_decay_range{0.1, 1.0};    // seconds
  Range reverb_wet_range{0.1, 0.5};
  Range noise_sigma_range{0.001, 0.01};  // amplitude
  double noise_truncation = 2.0;         // multiples of sigma

  static EffectChainConfig disabled() {
    EffectChainConfig c;
    c.p_time_shift = c.p_time_stretch = c.p_pitch_shift = c.p_reverb = c.p_noise = 0.0;
    return c;
  }
};

inline void validate(const EffectChainConfig& c) {
  auto prob = [](double p, const char* name) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::InvalidConfig, std::string(name) + " must lie in [0, 1]");
  };
  auto range = [](const Range& r, const char* name) {
    require(r.min <= r.max, ErrorCode::InvalidConfig, std::string(name) + " has min > max");
  };
  prob(c.p_time_shift, "p_time_shift");
  prob(c.p_time_stretch, "p_time_stretch");
  prob(c.p_pitch_shift, "p_pitch_shift");
  prob(c.p_reverb, "p_reverb");
  prob(c.p_noise, "p_noise");
  range(c.stretch_range, "stretch_range");
  range(c.pitch_range, "pitch_range");
  range(c.reverb_decay_range, "reverb_decay_range");
  range(c.reverb_wet_range, "reverb_wet_range");
  range(c.noise_sigma_range, "noise_sigma_range");
  require(c.time_shift_max >= 0.0, ErrorCode::InvalidConfig, "time_shift_max must be non-negative");
  require(c.stretch_range.min > kMinStretch && c.stretch_range.max < kMaxStretch, ErrorCode::InvalidConfig,
          "stretch_range must lie inside (0.25, 4)");
  require(c.pitch_range.min >= -kMaxSemitones && c.pitch_range.max <= kMaxSemitones, ErrorCode::InvalidConfig,
          "pitch_range must lie inside [-12, 12]");
  require(c.reverb_decay_range.min > 0.0, ErrorCode::InvalidConfig, "reverb decay must be positive");
  require(c.reverb_wet_range.min >= 0.0 && c.reverb_wet_range.max <= 1.0, ErrorCode::InvalidConfig,
          "reverb wet must lie in [0, 1]");
  require(c.noise_sigma_range.min >= 0.0, ErrorCode::InvalidConfig, "noise sigma must be non-negative");
  require(c.noise_truncation > 0.0, ErrorCode::InvalidConfig, "noise truncation must be positive");
}

struct ReverbParams {
  double decay_s = 0.0;
  double wet = 0.0;
};

struct NoiseParams {
  double sigma = 0.0;
  double truncation = 2.0;
};

/// One concrete draw of the chain; unset optionals are disabled effects.
struct EffectChainSample {
  std::optional<double> time_shift_s;
  std::optional<double> stretch_factor;
  std::optional<double> pitch_semitones;
  std::optional<ReverbParams> reverb;
  std::optional<NoiseParams> noise;
  std::uint64_t rng_seed = 0;

  bool any_enabled() const { return time_shift_s || stretch_factor || pitch_semitones || reverb || noise; }
};

/// Every effect's flag and parameters are drawn whether or not it ends up
/// enabled, so one effect's probability never perturbs another's draws.
inline EffectChainSample sample_chain(const EffectChainConfig& c, Rng& rng) {
  validate(c);
  EffectChainSample s;
  const bool shift_on = rng.bernoulli(c.p_time_shift);
  const double shift = rng.uniform(-c.time_shift_max, c.time_shift_max);
  const bool stretch_on = rng.bernoulli(c.p_time_stretch);
  const double stretch = rng.uniform(c.stretch_range.min, c.stretch_range.max);
  const bool pitch_on = rng.bernoulli(c.p_pitch_shift);
  const double pitch = rng.uniform(c.pitch_range.min, c.pitch_range.max);
  const bool reverb_on = rng.bernoulli(c.p_reverb);
  const double decay = rng.uniform(c.reverb_decay_range.min, c.reverb_decay_range.max);
  const double wet = rng.uniform(c.reverb_wet_range.min, c.reverb_wet_range.max);
  const bool noise_on = rng.bernoulli(c.p_noise);
  const double sigma = rng.uniform(c.noise_sigma_range.min, c.noise_sigma_range.max);

  if (shift_on) s.time_shift_s = shift;
  if (stretch_on) s.stretch_factor = stretch;
  if (pitch_on) s.pitch_semitones = pitch;
  if (reverb_on) s.reverb = ReverbParams{decay, wet};
  if (noise_on) s.noise = NoiseParams{sigma, c.noise_truncation};
  s.rng_seed = rng.next_u64();
  return s;
}

/// Applies the enabled effects in the fixed order shift, stretch, pitch,
/// reverb, noise, then crops or zero-pads back to the input length.
inline dsp::Waveform apply_chain(const dsp::Waveform& wave, const EffectChainSample& s) {
  if (!s.any_enabled()) return wave;
  const Rng base(s.rng_seed);
  dsp::Waveform y = wave;
  if (s.time_shift_s) y = time_shift(y, *s.time_shift_s);
  if (s.stretch_factor) y = time_stretch(y, *s.stretch_factor);
  if (s.pitch_semitones) y = pitch_shift(y, *s.pitch_semitones);
  if (s.reverb) {
    Rng r = base.fork(1);
    y = reverb(y, s.reverb->decay_s, s.reverb->wet, r);
  }
  if (s.noise) {
    Rng r = base.fork(2);
    y = add_noise(y, s.noise->sigma, s.noise->truncation, r);
  }
  y.samples.resize(wave.size(), 0.0f);
  return y;
}

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.min, r.max}); }
inline void from_json(const nlohmann::json& j, Range& r) {
  require(j.is_array() && j.size() == 2, ErrorCode::InvalidConfig, "ranges are [min, max] arrays");
  r.min = j.at(0).get<double>();
  r.max = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const EffectChainConfig& c) {
  j = nlohmann::json{{"p_time_shift", c.p_time_shift},
                     {"p_time_stretch", c.p_time_stretch},
                     {"p_pitch_shift", c.p_pitch_shift},
                     {"p_reverb", c.p_reverb},
                     {"p_noise", c.p_noise},
                     {"time_shift_max", c.time_shift_max},
                     {"stretch_range", c.stretch_range},
                     {"pitch_range", c.pitch_range},
                     {"reverb_decay_range", c.reverb_decay_range},
                     {"reverb_wet_range", c.reverb_wet_range},
                     {"noise_sigma_range", c.noise_sigma_range},
                     {"noise_truncation", c.noise_truncation}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, EffectChainConfig& c) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("p_time_shift", c.p_time_shift);
  opt("p_time_stretch", c.p_time_stretch);
  opt("p_pitch_shift", c.p_pitch_shift);
  opt("p_reverb", c.p_reverb);
  opt("p_noise", c.p_noise);
  opt("time_shift_max", c.time_shift_max);
  opt("stretch_range", c.stretch_range);
  opt("pitch_range", c.pitch_range);
  opt("reverb_decay_range", c.reverb_decay_range);
  opt("reverb_wet_range", c.reverb_wet_range);
  opt("noise_sigma_range", c.noise_sigma_range);
  opt("noise_truncation", c.noise_truncation);
  validate(c);
}

}  // namespace sse::augment
