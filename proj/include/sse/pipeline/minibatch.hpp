#pragma once

#include <numeric>
#include <vector>

#include "sse/augment/chain.hpp"
#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/pipeline/clips.hpp"

namespace sse::pipeline {

struct Minibatch {
  std::vector<std::size_t> pool_indices;
  std::vector<PoolClip> rows;
  std::vector<dsp::Waveform> originals;
  std::vector<dsp::Waveform> transformed;
  std::vector<augment::EffectChainSample> chains;

  std::size_t size() const { return rows.size(); }
};

/// Distinct pool indices while the pool lasts, then draws with replacement.
inline std::vector<std::size_t> draw_pool_indices(std::size_t pool_size, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> all(pool_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::size_t distinct = std::min(pool_size, batch_size);
  for (std::size_t i = 0; i < distinct; ++i) std::swap(all[i], all[i + rng.below(pool_size - i)]);
  std::vector<std::size_t> out(all.begin(), all.begin() + static_cast<long>(distinct));
  while (out.size() < batch_size) out.push_back(rng.below(pool_size));
  return out;
}

/// Each original is paired with apply_chain(original, chain) where every
/// slot's chain comes from its own RNG stream. Originals hold the first
/// `clip_samples` samples of each clip.
inline Minibatch build_minibatch(const std::vector<PoolClip>& pool, std::size_t batch_size, Rng& rng,
                                 const augment::EffectChainConfig& chain_config, AudioStore& audio,
                                 std::size_t clip_samples = kClipSamples) {
  require(!pool.empty(), ErrorCode::EmptySplit, "no clips in the requested split");
  require(distinct_tracks(pool) >= 2, ErrorCode::EmptySplit, "minibatches need at least two distinct tracks");
  require(batch_size > 0, ErrorCode::InvalidConfig, "batch size must be positive");
  augment::validate(chain_config);
  Minibatch mb;
  mb.pool_indices = draw_pool_indices(pool.size(), batch_size, rng);
  const std::uint64_t stream = rng.next_u64();
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto& row = pool[mb.pool_indices[i]];
    mb.rows.push_back(row);
    mb.originals.push_back(audio.clip(row.clip, clip_samples));
    Rng chain_rng(derive_seed(stream, i));
    mb.chains.push_back(augment::sample_chain(chain_config, chain_rng));
    mb.transformed.push_back(augment::apply_chain(mb.originals.back(), mb.chains.back()));
  }
  return mb;
}

}  // namespace sse::pipeline
