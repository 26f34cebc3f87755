#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sse/augment/chain.hpp"
#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/eval/ap.hpp"
#include "sse/eval/encoders.hpp"
#include "sse/nn/adam.hpp"
#include "sse/nn/encoder.hpp"
#include "sse/objective/triplet.hpp"
#include "sse/pipeline/minibatch.hpp"

namespace sse::objective {

struct TrainConfig {
  double margin = kDefaultMargin;
  std::array<double, kRelations> weights = kDefaultWeights;
  double learning_rate = 1e-3;
  double anneal_factor = 0.5;
  std::size_t anneal_patience = 3;
  std::size_t early_stop_patience = 10;
  std::size_t max_steps = 2000;
  std::size_t batch_size = 32;
  std::size_t eval_every = 50;
  std::size_t clips_per_track = pipeline::kClipsPerTrack;
  std::uint64_t seed = 0;
  augment::EffectChainConfig chain;
};

inline void validate(const TrainConfig& c) {
  require(c.margin > 0.0, ErrorCode::InvalidConfig, "margin must be positive");
  require(c.anneal_patience >= 1 && c.early_stop_patience >= 1, ErrorCode::InvalidConfig,
          "patience values must be at least 1");
  require(c.learning_rate > 0.0 && c.anneal_factor > 0.0 && c.anneal_factor <= 1.0, ErrorCode::InvalidConfig,
          "learning rate must be positive and the anneal factor in (0, 1]");
  require(c.batch_size >= 1 && c.eval_every >= 1 && c.clips_per_track >= 1, ErrorCode::InvalidConfig,
          "batch size, evaluation interval and clips per track must be positive");
  augment::validate(c.chain);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"margin", c.margin},
                     {"weights", c.weights},
                     {"learning_rate", c.learning_rate},
                     {"anneal_factor", c.anneal_factor},
                     {"anneal_patience", c.anneal_patience},
                     {"early_stop_patience", c.early_stop_patience},
                     {"max_steps", c.max_steps},
                     {"batch_size", c.batch_size},
                     {"eval_every", c.eval_every},
                     {"clips_per_track", c.clips_per_track},
                     {"seed", c.seed},
                     {"chain", c.chain}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("margin", c.margin);
  get("weights", c.weights);
  get("learning_rate", c.learning_rate);
  get("anneal_factor", c.anneal_factor);
  get("anneal_patience", c.anneal_patience);
  get("early_stop_patience", c.early_stop_patience);
  get("max_steps", c.max_steps);
  get("batch_size", c.batch_size);
  get("eval_every", c.eval_every);
  get("clips_per_track", c.clips_per_track);
  get("seed", c.seed);
  get("chain", c.chain);
}

/// One validation round.
struct TrainRecord {
  std::size_t step = 0;
  LossBreakdown loss;  // averaged over the steps since the previous round
  double val_genre_map = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

inline void to_json(nlohmann::json& j, const TrainRecord& r) {
  j = nlohmann::json{{"step", r.step},
                     {"loss", r.loss},
                     {"val_genre_map", r.val_genre_map},
                     {"lr", r.learning_rate},
                     {"improved", r.improved}};
}

struct TrainResult {
  nn::EncoderModel<float> model;  // best validation checkpoint
  nn::EncoderModel<float> last_model;  // parameters after the last step taken
  nn::AdamState<float> optimizer;      // state at the last step taken
  std::vector<TrainRecord> log;
  std::vector<double> step_totals;
  std::size_t steps = 0;
  std::size_t best_step = 0;
  double best_val_map = 0.0;
};

/// Log-mel images of pool clips, computed on first use.
class FeatureCache {
 public:
  FeatureCache(const nn::EncoderArch& arch, const std::vector<pipeline::PoolClip>& pool, pipeline::AudioStore& audio)
      : frontend_(arch), pool_(&pool), audio_(&audio) {}

  const std::vector<float>& image(std::size_t pool_index) {
    auto it = cache_.find(pool_index);
    if (it == cache_.end()) {
      const auto clip = audio_->clip((*pool_)[pool_index].clip, frontend_.arch().clip_samples);
      it = cache_.emplace(pool_index, frontend_.log_mel_image(clip.samples)).first;
    }
    return it->second;
  }

  const nn::FrontEnd& frontend() const { return frontend_; }

 private:
  nn::FrontEnd frontend_;
  const std::vector<pipeline::PoolClip>* pool_;
  pipeline::AudioStore* audio_;
  std::map<std::size_t, std::vector<float>> cache_;
};

/// Genre mAP of `model` on pre-computed validation images.
inline double validation_genre_map(const nn::EncoderModel<float>& model, const nn::Tensor<float>& images,
                                   const std::vector<pipeline::PoolClip>& pool) {
  const std::size_t plane = images.size() / images.dim(0);
  std::vector<std::vector<double>> rows;
  for (std::size_t start = 0; start < pool.size(); start += 32) {
    const std::size_t count = std::min<std::size_t>(32, pool.size() - start);
    nn::Tensor<float> x({count, 1, images.dim(2), images.dim(3)});
    std::copy_n(images.values.begin() + static_cast<long>(start * plane), count * plane, x.values.begin());
    for (auto& r : eval::tensor_rows(nn::infer_features(model, x))) rows.push_back(std::move(r));
  }
  return eval::map_score(eval::label_rows(std::move(rows), pool), eval::Annotation::Genre).map;
}

/// Minibatch -> forward -> mine -> loss -> backward -> Adam, with validation
/// genre mAP every `eval_every` steps driving annealing, early stopping and
/// checkpoint selection. `on_record` sees each round as it is logged.
inline TrainResult train(const pipeline::Catalog& catalog, nn::EncoderModel<float> model, const TrainConfig& config,
                         pipeline::AudioStore& audio,
                         const std::function<void(const TrainRecord&)>& on_record = {}) {
  validate(config);
  const auto train_pool = pipeline::clip_pool(catalog, pipeline::Split::Train, config.seed, config.clips_per_track);
  const auto val_pool = pipeline::clip_pool(catalog, pipeline::Split::Validation, config.seed, config.clips_per_track);
  require(!train_pool.empty(), ErrorCode::EmptySplit, "training split is empty");
  require(!val_pool.empty(), ErrorCode::EmptySplit, "validation split is empty");

  TrainResult result;
  result.optimizer = nn::make_adam(model.params, config.learning_rate);
  if (config.max_steps == 0) {
    result.model = model;
    result.last_model = std::move(model);
    return result;
  }

  FeatureCache train_features(model.arch, train_pool, audio);
  FeatureCache val_features(model.arch, val_pool, audio);
  const std::size_t mels = model.arch.n_mels, frames = model.arch.frames(), plane = mels * frames;
  nn::Tensor<float> val_images({val_pool.size(), 1, mels, frames});
  for (std::size_t i = 0; i < val_pool.size(); ++i) {
    const auto& img = val_features.image(i);
    std::copy(img.begin(), img.end(), val_images.values.begin() + static_cast<long>(i * plane));
  }

  auto& opt = result.optimizer;
  double best = validation_genre_map(model, val_images, val_pool);
  result.best_val_map = best;
  result.model = model;
  std::size_t since_best = 0, since_anneal = 0;
  LossBreakdown round_sum;
  std::size_t round_steps = 0;
  const Rng root(config.seed);

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    Rng batch_rng = root.fork(step);
    const auto mb = pipeline::build_minibatch(train_pool, config.batch_size, batch_rng, config.chain, audio,
                                                model.arch.clip_samples);
    const std::size_t b = mb.size();
    nn::Tensor<float> x({2 * b, 1, mels, frames});
    for (std::size_t i = 0; i < b; ++i) {
      const auto& img = train_features.image(mb.pool_indices[i]);
      std::copy(img.begin(), img.end(), x.values.begin() + static_cast<long>(i * plane));
      const auto timg = train_features.frontend().log_mel_image(mb.transformed[i].samples);
      std::copy(timg.begin(), timg.end(), x.values.begin() + static_cast<long>((b + i) * plane));
    }
    std::vector<RowMeta> meta(2 * b);
    for (std::size_t i = 0; i < 2 * b; ++i) {
      const auto& row = mb.rows[i % b];
      meta[i] = {i % b, row.clip.track_id, row.genre, row.mood};
    }

    auto fwd = nn::forward_features(model, x, nn::Mode::Train);
    const std::size_t dim = fwd.embeddings.dim(1);
    const std::vector<double> emb(fwd.embeddings.values.begin(), fwd.embeddings.values.end());
    const auto terms = mine_triplets(meta, pairwise_distances(emb, 2 * b, dim), config.weights);
    const auto loss = total_loss(terms, emb, 2 * b, dim, config.margin);
    if (!std::isfinite(loss.breakdown.total)) {
      TrainRecord rec{step, loss.breakdown, std::nan(""), opt.learning_rate, false};
      result.log.push_back(rec);
      if (on_record) on_record(rec);
      throw Error(ErrorCode::DivergenceError, "non-finite training loss at step " + std::to_string(step));
    }
    nn::Tensor<float> upstream({2 * b, dim});
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = static_cast<float>(loss.grad[i]);
    const auto grads = nn::encode_backward(model, *fwd.cache, upstream);
    nn::adam_step(model.params, grads, opt);
    model.touch();

    result.steps = step;
    result.step_totals.push_back(loss.breakdown.total);
    for (std::size_t r = 0; r < kRelations; ++r) {
      round_sum.mean[r] += loss.breakdown.mean[r];
      round_sum.count[r] += loss.breakdown.count[r];
      round_sum.weight[r] = loss.breakdown.weight[r];
    }
    round_sum.total += loss.breakdown.total;
    ++round_steps;

    if (step % config.eval_every != 0 && step != config.max_steps) continue;
    TrainRecord rec;
    rec.step = step;
    rec.loss = round_sum;
    for (std::size_t r = 0; r < kRelations; ++r) rec.loss.mean[r] /= static_cast<double>(round_steps);
    rec.loss.total /= static_cast<double>(round_steps);
    round_sum = LossBreakdown{};
    round_steps = 0;
    rec.val_genre_map = validation_genre_map(model, val_images, val_pool);
    rec.improved = rec.val_genre_map > best;
    if (rec.improved) {
      best = rec.val_genre_map;
      result.model = model;
      result.best_step = step;
      result.best_val_map = best;
      since_best = since_anneal = 0;
    } else {
      ++since_best;
      if (++since_anneal >= config.anneal_patience) {
        opt.learning_rate *= config.anneal_factor;
        since_anneal = 0;
      }
    }
    rec.learning_rate = opt.learning_rate;
    result.log.push_back(rec);
    if (on_record) on_record(rec);
    if (since_best >= config.early_stop_patience) break;
  }
  result.last_model = std::move(model);
  return result;
}

}  // namespace sse::objective
