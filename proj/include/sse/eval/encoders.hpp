#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sse/core/rng.hpp"
#include "sse/dsp/mel.hpp"
#include "sse/dsp/mfcc.hpp"
#include "sse/dsp/pca.hpp"
#include "sse/dsp/stft.hpp"
#include "sse/eval/ap.hpp"
#include "sse/nn/encoder.hpp"
#include "sse/pipeline/clips.hpp"

namespace sse::eval {

inline constexpr std::size_t kRandomDim = 128;
inline constexpr std::size_t kBaselineMels = 128;
inline constexpr std::size_t kBaselineDim = 20;

/// 128 uniform [0, 1) draws seeded by (seed, clip identity); not normalized.
inline std::vector<double> random_embedding(const pipeline::ClipRef& clip, std::uint64_t seed) {
  Rng rng(derive_seed(seed, clip.key()));
  std::vector<double> e(kRandomDim);
  for (auto& v : e) v = rng.uniform();
  return e;
}

/// Mean over frames of 20 MFCCs taken from a 128-band log-mel spectrogram.
class MfccMeanFeatures {
 public:
  MfccMeanFeatures()
      : fb_(dsp::mel_filterbank(kBaselineMels, dsp::kDefaultFftSize, dsp::kModelSampleRate, dsp::kDefaultFMin)) {}

  std::vector<double> operator()(const dsp::Waveform& clip) const {
    const auto spec = dsp::stft(clip, dsp::kDefaultFftSize, dsp::kDefaultHop);
    const auto coeffs = dsp::mfcc(dsp::log_mel(spec, fb_), kBaselineDim);
    std::vector<double> mean(kBaselineDim, 0.0);
    for (const auto& frame : coeffs) {
      for (std::size_t k = 0; k < kBaselineDim; ++k) mean[k] += frame[k];
    }
    for (auto& m : mean) m /= static_cast<double>(coeffs.size());
    return mean;
  }

 private:
  dsp::MelFilterbank fb_;
};

/// PCA (k = 20) over MFCC means of training clips.
inline dsp::PcaModel fit_baseline(std::span<const std::vector<double>> train_features) {
  return dsp::pca_fit(train_features, kBaselineDim);
}

inline std::vector<double> baseline_embedding(const dsp::Waveform& clip, const dsp::PcaModel& pca) {
  require(pca.fitted(), ErrorCode::ModelNotFitted, "baseline PCA has not been fitted");
  return dsp::pca_transform(pca, MfccMeanFeatures{}(clip));
}

/// Maps pool clips to embedding rows.
struct ClipEncoder {
  std::string name;
  std::function<std::vector<std::vector<double>>(const std::vector<pipeline::PoolClip>&, pipeline::AudioStore&)>
      embed;
};

inline ClipEncoder random_encoder(std::uint64_t seed) {
  return {"random", [seed](const std::vector<pipeline::PoolClip>& clips, pipeline::AudioStore&) {
            std::vector<std::vector<double>> out;
            for (const auto& c : clips) out.push_back(random_embedding(c.clip, seed));
            return out;
          }};
}

inline ClipEncoder baseline_encoder(dsp::PcaModel pca) {
  return {"baseline", [pca = std::move(pca)](const std::vector<pipeline::PoolClip>& clips,
                                             pipeline::AudioStore& audio) {
            require(pca.fitted(), ErrorCode::ModelNotFitted, "baseline PCA has not been fitted");
            const MfccMeanFeatures features;
            std::vector<std::vector<double>> out;
            for (const auto& c : clips) out.push_back(dsp::pca_transform(pca, features(audio.clip(c.clip))));
            return out;
          }};
}

/// Fits the baseline PCA on the training split's clip pool.
inline ClipEncoder fit_baseline_encoder(const pipeline::Catalog& catalog, std::uint64_t seed,
                                        pipeline::AudioStore& audio) {
  const auto pool = pipeline::clip_pool(catalog, pipeline::Split::Train, seed);
  require(!pool.empty(), ErrorCode::EmptySplit, "baseline PCA needs training clips");
  const MfccMeanFeatures features;
  std::vector<std::vector<double>> feats;
  for (const auto& c : pool) feats.push_back(features(audio.clip(c.clip)));
  return baseline_encoder(fit_baseline(feats));
}

template <typename Real>
std::vector<std::vector<double>> tensor_rows(const nn::Tensor<Real>& t) {
  std::vector<std::vector<double>> rows(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) rows[i][j] = t[i * t.dim(1) + j];
  }
  return rows;
}

inline ClipEncoder model_encoder(const nn::EncoderModel<float>& model, std::string name = "convnet",
                                 std::size_t batch = 16) {
  return {std::move(name), [&model, batch](const std::vector<pipeline::PoolClip>& clips,
                                           pipeline::AudioStore& audio) {
            std::vector<std::vector<double>> out;
            for (std::size_t start = 0; start < clips.size(); start += batch) {
              std::vector<dsp::Waveform> wav;
              for (std::size_t i = start; i < std::min(clips.size(), start + batch); ++i) {
                wav.push_back(audio.clip(clips[i].clip, model.arch.clip_samples));
              }
              for (auto& r : tensor_rows(nn::encode(model, std::span<const dsp::Waveform>(wav)))) {
                out.push_back(std::move(r));
              }
            }
            return out;
          }};
}

inline LabeledEmbeddingSet label_rows(std::vector<std::vector<double>> embeddings,
                                      const std::vector<pipeline::PoolClip>& clips) {
  LabeledEmbeddingSet set;
  set.embeddings = std::move(embeddings);
  for (const auto& c : clips) {
    set.track_ids.push_back(c.clip.track_id);
    set.genres.push_back(c.genre);
    set.moods.push_back(c.mood);
  }
  return set;
}

/// Genre, mood and track reports over every pre-sampled clip of `split`.
inline std::vector<ApReport> evaluate_encoder(const ClipEncoder& encoder, const pipeline::Catalog& catalog,
                                              pipeline::Split split, std::uint64_t seed,
                                              pipeline::AudioStore& audio) {
  const auto pool = pipeline::clip_pool(catalog, split, seed);
  require(!pool.empty(), ErrorCode::EmptySplit, "split " + pipeline::to_string(split) + " has no tracks");
  const auto set = label_rows(encoder.embed(pool, audio), pool);
  std::vector<ApReport> reports;
  for (auto a : {Annotation::Genre, Annotation::Mood, Annotation::Track}) {
    reports.push_back(map_score(set, a, encoder.name));
  }
  return reports;
}

}  // namespace sse::eval
