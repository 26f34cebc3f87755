#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sse/core/error.hpp"
#include "sse/core/rng.hpp"
#include "sse/dsp/mel.hpp"
#include "sse/dsp/stft.hpp"
#include "sse/dsp/waveform.hpp"
#include "sse/nn/layers.hpp"
#include "sse/nn/tensor.hpp"

namespace sse::nn {

/// Architecture descriptor; stored verbatim (as JSON) in model files.
struct EncoderArch {
  std::string variant = "small-convnet";
  int sample_rate = dsp::kModelSampleRate;
  std::size_t clip_samples = 160000;
  std::size_t fft_size = dsp::kDefaultFftSize;
  std::size_t hop = dsp::kDefaultHop;
  std::size_t n_mels = 128;
  double f_min = dsp::kDefaultFMin;
  std::size_t rgb_channels = 3;
  std::vector<std::size_t> body_channels{16, 32, 64, 128};
  std::size_t kernel = 3;
  std::size_t embedding_dim = 128;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::size_t frames() const { return dsp::stft_frame_count(clip_samples, fft_size, hop); }

  /// The 2-block, 8-channel, 0.5 s configuration used for gradient checks.
  static EncoderArch tiny() {
    EncoderArch a;
    a.variant = "tiny-convnet";
    a.clip_samples = 8000;
    a.n_mels = 16;
    a.body_channels = {8, 8};
    return a;
  }
};

inline void validate(const EncoderArch& a) {
  require(a.sample_rate > 0 && a.fft_size >= 4 && a.hop > 0 && a.n_mels > 0 && a.rgb_channels > 0 &&
              a.kernel % 2 == 1 && a.embedding_dim > 0 && !a.body_channels.empty(),
          ErrorCode::InvalidConfig, "malformed encoder architecture");
  require(a.clip_samples >= a.fft_size, ErrorCode::InvalidConfig, "clip shorter than one FFT frame");
  std::size_t h = a.n_mels, w = a.frames();
  for (std::size_t i = 0; i < a.body_channels.size(); ++i) {
    require(h >= 2 && w >= 2, ErrorCode::InvalidConfig, "too many pooling stages for the input size");
    h /= 2;
    w /= 2;
  }
}

inline void to_json(nlohmann::json& j, const EncoderArch& a) {
  j = nlohmann::json{{"variant", a.variant},
                     {"stand_in_body", true},
                     {"sample_rate", a.sample_rate},
                     {"clip_samples", a.clip_samples},
                     {"fft_size", a.fft_size},
                     {"hop", a.hop},
                     {"n_mels", a.n_mels},
                     {"f_min", a.f_min},
                     {"rgb_channels", a.rgb_channels},
                     {"body_channels", a.body_channels},
                     {"kernel", a.kernel},
                     {"embedding_dim", a.embedding_dim},
                     {"bn_momentum", a.bn_momentum},
                     {"bn_eps", a.bn_eps}};
}

inline void from_json(const nlohmann::json& j, EncoderArch& a) {
  j.at("variant").get_to(a.variant);
  j.at("sample_rate").get_to(a.sample_rate);
  j.at("clip_samples").get_to(a.clip_samples);
  j.at("fft_size").get_to(a.fft_size);
  j.at("hop").get_to(a.hop);
  j.at("n_mels").get_to(a.n_mels);
  j.at("f_min").get_to(a.f_min);
  j.at("rgb_channels").get_to(a.rgb_channels);
  j.at("body_channels").get_to(a.body_channels);
  j.at("kernel").get_to(a.kernel);
  j.at("embedding_dim").get_to(a.embedding_dim);
  j.at("bn_momentum").get_to(a.bn_momentum);
  j.at("bn_eps").get_to(a.bn_eps);
}

enum class Mode { Train, Inference };

namespace detail {
inline std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

/// Parameters theta of the encoder plus batch-norm running statistics.
///
/// Learned tensors, in declaration order:
///   input_bn.gamma, input_bn.beta            [n_mels]
///   rgb.weight [3,1,1,1], rgb.bias [3]
///   per block i: conv.weight [Co,Ci,k,k], bn.gamma [Co], bn.beta [Co]
///   head.weight [E, C_last], head.bias [E]
/// Buffers: input_bn running mean/var, then per-block bn running mean/var.
template <typename Real>
struct EncoderModel {
  EncoderArch arch;
  std::vector<Tensor<Real>> params;
  std::vector<std::string> param_names;
  std::vector<Tensor<Real>> buffers;
  std::uint64_t version = detail::next_version();

  std::size_t blocks() const { return arch.body_channels.size(); }
  static constexpr std::size_t in_gamma() { return 0; }
  static constexpr std::size_t in_beta() { return 1; }
  static constexpr std::size_t rgb_weight() { return 2; }
  static constexpr std::size_t rgb_bias() { return 3; }
  static constexpr std::size_t conv_weight(std::size_t b) { return 4 + 3 * b; }
  static constexpr std::size_t bn_gamma(std::size_t b) { return 5 + 3 * b; }
  static constexpr std::size_t bn_beta(std::size_t b) { return 6 + 3 * b; }
  std::size_t head_weight() const { return 4 + 3 * blocks(); }
  std::size_t head_bias() const { return 5 + 3 * blocks(); }
  static constexpr std::size_t in_running_mean() { return 0; }
  static constexpr std::size_t in_running_var() { return 1; }
  static constexpr std::size_t bn_running_mean(std::size_t b) { return 2 + 2 * b; }
  static constexpr std::size_t bn_running_var(std::size_t b) { return 3 + 2 * b; }

  /// Marks parameters as changed; invalidates outstanding forward caches.
  void touch() { version = detail::next_version(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  template <typename Other>
  EncoderModel<Other> cast() const {
    EncoderModel<Other> m;
    m.arch = arch;
    m.param_names = param_names;
    for (const auto& p : params) m.params.push_back(p.template cast<Other>());
    for (const auto& b : buffers) m.buffers.push_back(b.template cast<Other>());
    return m;
  }
};

/// He-normal convolution weights, unit batch-norm scales, zero shifts.
template <typename Real>
EncoderModel<Real> init_encoder(const EncoderArch& arch, std::uint64_t seed) {
  validate(arch);
  Rng rng(derive_seed(seed, "encoder-init"));
  EncoderModel<Real> m;
  m.arch = arch;
  auto add = [&](std::string name, Shape shape, auto&& fill) {
    Tensor<Real> t(std::move(shape));
    for (auto& v : t.values) v = static_cast<Real>(fill());
    m.params.push_back(std::move(t));
    m.param_names.push_back(std::move(name));
  };
  auto constant = [](double c) { return [c] { return c; }; };
  auto normal = [&rng](double sd) { return [&rng, sd] { return sd * rng.normal(); }; };

  add("input_bn.gamma", {arch.n_mels}, constant(1.0));
  add("input_bn.beta", {arch.n_mels}, constant(0.0));
  add("rgb.weight", {arch.rgb_channels, 1, 1, 1}, [&rng] { return 1.0 + 0.5 * rng.normal(); });
  add("rgb.bias", {arch.rgb_channels}, constant(0.0));
  std::size_t in_ch = arch.rgb_channels;
  for (std::size_t b = 0; b < arch.body_channels.size(); ++b) {
    const std::size_t out_ch = arch.body_channels[b];
    const double fan_in = static_cast<double>(in_ch * arch.kernel * arch.kernel);
    const std::string pre = "block" + std::to_string(b);
    add(pre + ".conv.weight", {out_ch, in_ch, arch.kernel, arch.kernel}, normal(std::sqrt(2.0 / fan_in)));
    add(pre + ".bn.gamma", {out_ch}, constant(1.0));
    add(pre + ".bn.beta", {out_ch}, constant(0.0));
    in_ch = out_ch;
  }
  add("head.weight", {arch.embedding_dim, in_ch}, normal(std::sqrt(1.0 / static_cast<double>(in_ch))));
  add("head.bias", {arch.embedding_dim}, constant(0.0));

  m.buffers.emplace_back(Shape{arch.n_mels}, Real(0));
  m.buffers.emplace_back(Shape{arch.n_mels}, Real(1));
  for (std::size_t c : arch.body_channels) {
    m.buffers.emplace_back(Shape{c}, Real(0));
    m.buffers.emplace_back(Shape{c}, Real(1));
  }
  return m;
}

/// Fixed spectral front-end: STFT -> mel filterbank -> log.
class FrontEnd {
 public:
  explicit FrontEnd(const EncoderArch& arch)
      : arch_(arch), fb_(dsp::mel_filterbank(arch.n_mels, arch.fft_size, arch.sample_rate, arch.f_min)) {}

  const EncoderArch& arch() const { return arch_; }

  /// One clip -> [n_mels x frames] (mel-major) log-mel image.
  std::vector<float> log_mel_image(std::span<const float> clip) const {
    require(clip.size() == arch_.clip_samples, ErrorCode::ShapeMismatch,
            "clip has " + std::to_string(clip.size()) + " samples, encoder expects " +
                std::to_string(arch_.clip_samples));
    const auto spec = dsp::stft(clip, arch_.sample_rate, arch_.fft_size, arch_.hop);
    const auto lm = dsp::log_mel(spec, fb_);
    std::vector<float> img(lm.n_mels * lm.n_frames);
    for (std::size_t t = 0; t < lm.n_frames; ++t) {
      for (std::size_t m = 0; m < lm.n_mels; ++m) img[m * lm.n_frames + t] = static_cast<float>(lm.at(t, m));
    }
    return img;
  }

  template <typename Real>
  Tensor<Real> batch(std::span<const dsp::Waveform> clips) const {
    const std::size_t plane = arch_.n_mels * arch_.frames();
    Tensor<Real> x({clips.size(), 1, arch_.n_mels, arch_.frames()});
    for (std::size_t i = 0; i < clips.size(); ++i) {
      require(clips[i].sample_rate == arch_.sample_rate, ErrorCode::ShapeMismatch, "clip sample rate mismatch");
      const auto img = log_mel_image(clips[i].samples);
      std::copy(img.begin(), img.end(), x.values.begin() + static_cast<long>(i * plane));
    }
    return x;
  }

 private:
  EncoderArch arch_;
  dsp::MelFilterbank fb_;
};

template <typename Real>
struct ForwardCache {
  std::uint64_t model_version = 0;
  std::size_t batch = 0;
  BatchNormCache<Real> input_bn;
  struct Block {
    Tensor<Real> conv_in;
    BatchNormCache<Real> bn;
    Shape pre_pool;
    std::vector<std::uint32_t> argmax;
  };
  std::vector<Block> blocks;
  Shape gap_in;
  Tensor<Real> pooled;     // [B, C_last]
  Tensor<Real> embedding;  // [B, E]
  std::vector<double> norms;
};

template <typename Real>
struct ForwardResult {
  Tensor<Real> embeddings;             // [B, E], unit rows
  std::optional<ForwardCache<Real>> cache;  // train mode only
};

namespace detail {

template <typename Real>
void update_running(Tensor<Real>& mean, Tensor<Real>& var, const BatchNormCache<Real>& c, double momentum,
                    double count) {
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  for (std::size_t f = 0; f < mean.size(); ++f) {
    mean[f] = static_cast<Real>((1.0 - momentum) * mean[f] + momentum * c.mean[f]);
    var[f] = static_cast<Real>((1.0 - momentum) * var[f] + momentum * c.var[f] * unbias);
  }
}

}  // namespace detail

namespace detail {

// `running` receives the batch-norm running-statistic updates in train mode.
template <typename Real>
ForwardResult<Real> forward_core(const EncoderModel<Real>& model, const Tensor<Real>& input, Mode mode,
                                 std::vector<Tensor<Real>>* running) {
  const auto& a = model.arch;
  require(input.shape.size() == 4 && input.dim(1) == 1 && input.dim(2) == a.n_mels && input.dim(3) == a.frames(),
          ErrorCode::ShapeMismatch, "encoder input " + shape_string(input.shape));
  const bool train = mode == Mode::Train;
  const std::size_t batch = input.dim(0);
  ForwardResult<Real> result;
  ForwardCache<Real> cache;
  cache.model_version = model.version;
  cache.batch = batch;

  const BnLayout in_lay{batch, a.n_mels, a.frames()};
  Tensor<Real> x;
  if (train) {
    x = batchnorm_forward_train(input, in_lay, model.params[model.in_gamma()], model.params[model.in_beta()],
                                a.bn_eps, cache.input_bn);
    if (running != nullptr) {
      update_running((*running)[model.in_running_mean()], (*running)[model.in_running_var()], cache.input_bn,
                     a.bn_momentum, static_cast<double>(batch * a.frames()));
    }
  } else {
    x = batchnorm_forward_inference(input, in_lay, model.params[model.in_gamma()], model.params[model.in_beta()],
                                    model.buffers[model.in_running_mean()], model.buffers[model.in_running_var()],
                                    a.bn_eps);
  }
  x = conv2d_forward(x, model.params[model.rgb_weight()], &model.params[model.rgb_bias()]);

  for (std::size_t b = 0; b < model.blocks(); ++b) {
    typename ForwardCache<Real>::Block blk;
    Tensor<Real> y = conv2d_forward(x, model.params[model.conv_weight(b)], static_cast<const Tensor<Real>*>(nullptr));
    const BnLayout lay{batch, y.dim(1), y.dim(2) * y.dim(3)};
    if (train) {
      y = batchnorm_forward_train(y, lay, model.params[model.bn_gamma(b)], model.params[model.bn_beta(b)], a.bn_eps,
                                  blk.bn);
      if (running != nullptr) {
        update_running((*running)[model.bn_running_mean(b)], (*running)[model.bn_running_var(b)], blk.bn,
                       a.bn_momentum, static_cast<double>(lay.outer * lay.inner));
      }
    } else {
      y = batchnorm_forward_inference(y, lay, model.params[model.bn_gamma(b)], model.params[model.bn_beta(b)],
                                      model.buffers[model.bn_running_mean(b)],
                                      model.buffers[model.bn_running_var(b)], a.bn_eps);
    }
    relu_inplace(y);
    if (train) {
      blk.conv_in = std::move(x);
      blk.pre_pool = y.shape;
    }
    x = maxpool2x2_forward(y, blk.argmax);
    if (train) cache.blocks.push_back(std::move(blk));
  }

  if (train) cache.gap_in = x.shape;
  Tensor<Real> pooled = global_avg_pool_forward(x);
  Tensor<Real> z = dense_forward(pooled, model.params[model.head_weight()], model.params[model.head_bias()]);
  std::vector<double> norms;
  result.embeddings = l2_normalize_forward(z, norms);
  if (train) {
    cache.pooled = std::move(pooled);
    cache.embedding = result.embeddings;
    cache.norms = std::move(norms);
    result.cache = std::move(cache);
  }
  return result;
}

}  // namespace detail

/// Runs the network on a log-mel batch [B, 1, n_mels, frames]. Train mode
/// uses batch statistics, updates running statistics and returns a cache.
template <typename Real>
ForwardResult<Real> forward_features(EncoderModel<Real>& model, const Tensor<Real>& input, Mode mode) {
  return detail::forward_core(model, input, mode, mode == Mode::Train ? &model.buffers : nullptr);
}

template <typename Real>
Tensor<Real> infer_features(const EncoderModel<Real>& model, const Tensor<Real>& input) {
  return detail::forward_core<Real>(model, input, Mode::Inference, nullptr).embeddings;
}

template <typename Real>
ForwardResult<Real> encode_forward(EncoderModel<Real>& model, std::span<const dsp::Waveform> clips, Mode mode) {
  const FrontEnd fe(model.arch);
  return forward_features(model, fe.template batch<Real>(clips), mode);
}

template <typename Real>
Tensor<Real> encode(const EncoderModel<Real>& model, std::span<const dsp::Waveform> clips) {
  const FrontEnd fe(model.arch);
  return infer_features(model, fe.template batch<Real>(clips));
}

template <typename Real>
using Gradients = std::vector<Tensor<Real>>;

template <typename Real>
Gradients<Real> zero_gradients(const EncoderModel<Real>& model) {
  Gradients<Real> g;
  for (const auto& p : model.params) g.emplace_back(p.shape);
  return g;
}

/// Backpropagates an upstream gradient on the unit embeddings [B, E] to every
/// learned parameter.
template <typename Real>
Gradients<Real> encode_backward(const EncoderModel<Real>& model, const ForwardCache<Real>& cache,
                                const Tensor<Real>& upstream) {
  require(cache.model_version == model.version, ErrorCode::CacheMismatch,
          "forward cache was produced by a different parameter version");
  require(upstream.shape == Shape{cache.batch, model.arch.embedding_dim}, ErrorCode::CacheMismatch,
          "upstream gradient shape " + shape_string(upstream.shape) + " does not match the cached batch");
  Gradients<Real> g = zero_gradients(model);

  Tensor<Real> dz = l2_normalize_backward(cache.embedding, cache.norms, upstream);
  Tensor<Real> dx =
      dense_backward(cache.pooled, model.params[model.head_weight()], dz, g[model.head_weight()], g[model.head_bias()]);
  dx = global_avg_pool_backward(dx, cache.gap_in);

  for (std::size_t bi = model.blocks(); bi-- > 0;) {
    const auto& blk = cache.blocks[bi];
    Tensor<Real> dy = maxpool2x2_backward(dx, blk.argmax, blk.pre_pool);
    // ReLU mask: the block output was positive where gamma * xhat + beta > 0.
    const auto& gamma = model.params[model.bn_gamma(bi)];
    const auto& beta = model.params[model.bn_beta(bi)];
    const std::size_t ch = blk.pre_pool[1], inner = blk.pre_pool[2] * blk.pre_pool[3];
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const std::size_t c = (i / inner) % ch;
      if (!(gamma[c] * blk.bn.xhat[i] + beta[c] > Real(0))) dy[i] = Real(0);
    }
    const BnLayout lay{cache.batch, ch, inner};
    dy = batchnorm_backward(dy, lay, gamma, blk.bn, g[model.bn_gamma(bi)], g[model.bn_beta(bi)]);
    Tensor<Real> dprev;
    conv2d_backward(blk.conv_in, model.params[model.conv_weight(bi)], dy, &dprev, g[model.conv_weight(bi)],
                    static_cast<Tensor<Real>*>(nullptr));
    dx = std::move(dprev);
  }

  // dx is now the gradient w.r.t. the rgb projection output.
  Tensor<Real> dbn;
  const auto& bn_out_shape = cache.input_bn.xhat.shape;
  Tensor<Real> bn_out(bn_out_shape);
  {
    const auto& gamma = model.params[model.in_gamma()];
    const auto& beta = model.params[model.in_beta()];
    const std::size_t mels = model.arch.n_mels, frames = model.arch.frames();
    for (std::size_t i = 0; i < bn_out.size(); ++i) {
      const std::size_t m = (i / frames) % mels;
      bn_out[i] = gamma[m] * cache.input_bn.xhat[i] + beta[m];
    }
  }
  conv2d_backward(bn_out, model.params[model.rgb_weight()], dx, &dbn, g[model.rgb_weight()], &g[model.rgb_bias()]);
  const BnLayout in_lay{cache.batch, model.arch.n_mels, model.arch.frames()};
  batchnorm_backward(dbn, in_lay, model.params[model.in_gamma()], cache.input_bn, g[model.in_gamma()],
                     g[model.in_beta()]);
  return g;
}

}  // namespace sse::nn
