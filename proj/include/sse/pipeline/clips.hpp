#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/dsp/resample.hpp"
#include "sse/dsp/wav.hpp"
#include "sse/pipeline/catalog.hpp"
#include "sse/pipeline/split.hpp"

namespace sse::pipeline {

inline constexpr std::size_t kClipsPerTrack = 10;

struct ClipRef {
  std::string track_id;
  std::size_t index = 0;  // position within the track's sampled clips
  double offset_s = 0.0;
  double duration_s = kClipSeconds;

  /// Stable identity used to seed per-clip randomness.
  std::string key() const { return track_id + "#" + std::to_string(index); }
};

/// n offsets uniform on [0, duration - 10].
inline std::vector<ClipRef> sample_clips(const TrackMeta& track, std::size_t n, Rng& rng) {
  require(track.duration_s >= kClipSeconds, ErrorCode::TrackTooShort,
          "track " + track.track_id + " lasts " + std::to_string(track.duration_s) + " s, clips need 10 s");
  std::vector<ClipRef> clips;
  clips.reserve(n);
  const double span = track.duration_s - kClipSeconds;
  for (std::size_t i = 0; i < n; ++i) clips.push_back({track.track_id, i, rng.uniform(0.0, span), kClipSeconds});
  return clips;
}

/// Clips of one track depend only on (seed, track_id).
inline std::vector<ClipRef> sample_track_clips(const TrackMeta& track, std::uint64_t seed,
                                               std::size_t n = kClipsPerTrack) {
  Rng rng(derive_seed(seed, track.track_id));
  return sample_clips(track, n, rng);
}

struct PoolClip {
  ClipRef clip;
  std::string genre;
  std::string mood;
};

/// The pre-sampled clips of every track in `split`, in catalog order.
inline std::vector<PoolClip> clip_pool(const Catalog& catalog, Split split, std::uint64_t seed,
                                       std::size_t clips_per_track = kClipsPerTrack) {
  std::vector<PoolClip> pool;
  for (const auto& t : catalog.tracks()) {
    if (assign_split(t.track_id) != split) continue;
    for (auto& c : sample_track_clips(t, seed, clips_per_track)) pool.push_back({std::move(c), t.genre, t.mood});
  }
  return pool;
}

inline std::size_t distinct_tracks(const std::vector<PoolClip>& pool) {
  std::vector<std::string> ids;
  for (const auto& p : pool) ids.push_back(p.clip.track_id);
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

/// Decodes a track to 16 kHz mono.
inline dsp::Waveform load_track_audio(const TrackMeta& track) {
  return dsp::resample_to_mono(dsp::read_wav(track.audio_path), dsp::kModelSampleRate);
}

inline constexpr std::size_t kClipSamples = static_cast<std::size_t>(kClipSeconds * dsp::kModelSampleRate);

/// `n` samples (10 s by default) of 16 kHz audio starting at `offset_s`;
/// zero-padded past the end of the audio.
inline dsp::Waveform extract_clip(const dsp::Waveform& track_audio, double offset_s, std::size_t n = kClipSamples) {
  require(track_audio.sample_rate == dsp::kModelSampleRate, ErrorCode::UnsupportedRate,
          "clips are cut from 16 kHz audio");
  const auto start = static_cast<std::size_t>(std::max<long long>(0, std::llround(offset_s * dsp::kModelSampleRate)));
  dsp::Waveform clip{std::vector<float>(n, 0.0f), dsp::kModelSampleRate};
  if (start < track_audio.size()) {
    const std::size_t count = std::min(n, track_audio.size() - start);
    std::copy_n(track_audio.samples.begin() + static_cast<long>(start), count, clip.samples.begin());
  }
  return clip;
}

/// Decoded track audio, loaded on first use and kept in memory.
class AudioStore {
 public:
  explicit AudioStore(const Catalog& catalog) : catalog_(&catalog) {}

  const dsp::Waveform& track(const std::string& id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, load_track_audio(catalog_->at(id))).first;
    return it->second;
  }

  dsp::Waveform clip(const ClipRef& ref, std::size_t n = kClipSamples) {
    return extract_clip(track(ref.track_id), ref.offset_s, n);
  }

  void evict(const std::string& id) { cache_.erase(id); }

 private:
  const Catalog* catalog_;
  std::map<std::string, dsp::Waveform> cache_;
};

}  // namespace sse::pipeline
