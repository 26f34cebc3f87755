#pragma once

// Central finite-difference checks shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sse/core/rng.hpp"
#include "sse/dsp/waveform.hpp"
#include "sse/nn/encoder.hpp"
#include "sse/nn/layers.hpp"
#include "sse/objective/triplet.hpp"

namespace sse::testing {

using nn::Tensor;

struct GradReport {
  std::string name;
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t reduced = 0;  // checked with a smaller step, see check_entries
};

// |a - n| / max(|a|, |n|, floor).
inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Checks d(loss)/d(x) for every entry of x with central differences.
/// The floor is 1% of the tensor's largest analytic gradient, which bounds
/// the O(h^2) truncation error on near-zero entries. When `switched` reports
/// that x +- h lies across a ReLU or max-pool switch, the difference quotient
/// spans a kink; the step is halved until it does not and the entry counted.
inline GradReport check_entries(const std::string& name, std::vector<double>& x, const std::vector<double>& analytic,
                                const std::function<double()>& loss, double h = 1e-3,
                                const std::function<bool()>& switched = {}) {
  GradReport r{name, 0.0, 0, 0};
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-2 * scale, 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    double step = h;
    double numeric = 0.0;
    for (int halvings = 0;; ++halvings) {
      x[i] = keep + step;
      const double up = loss();
      const bool crossed_up = switched && switched();
      x[i] = keep - step;
      const double down = loss();
      const bool crossed_down = switched && switched();
      x[i] = keep;
      numeric = (up - down) / (2 * step);
      if (!(crossed_up || crossed_down) || halvings == 20) break;
      step *= 0.5;
    }
    if (step != h) ++r.reduced;
    r.max_rel = std::max(r.max_rel, rel_error(analytic[i], numeric, floor));
    ++r.checked;
  }
  return r;
}

inline Tensor<double> random_tensor(nn::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values) v = scale * rng.normal();
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Inputs are drawn on a grid offset so that no pre-activation sits within a
// perturbation of a ReLU or max-pool switch point.
inline std::vector<GradReport> check_layers(std::uint64_t seed) {
  using namespace sse::nn;
  std::vector<GradReport> out;
  Rng rng(seed);

  {  // conv 3x3, with bias
    auto x = random_tensor({2, 3, 5, 4}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng, 0.5);
    auto b = random_tensor({4}, rng);
    auto u = random_tensor({2, 4, 5, 4}, rng);
    auto loss = [&] { return dot(conv2d_forward(x, w, &b), u); };
    Tensor<double> dx, dw(w.shape), db(b.shape);
    conv2d_backward(x, w, u, &dx, dw, &db);
    out.push_back(check_entries("conv.input", x.values, dx.values, loss));
    out.push_back(check_entries("conv.weight", w.values, dw.values, loss));
    out.push_back(check_entries("conv.bias", b.values, db.values, loss));
  }
  {  // batch norm, train mode
    auto x = random_tensor({3, 4, 6}, rng, 2.0);
    auto g = random_tensor({4}, rng);
    auto be = random_tensor({4}, rng);
    auto u = random_tensor({3, 4, 6}, rng);
    const BnLayout lay{3, 4, 6};
    auto loss = [&] {
      BatchNormCache<double> c;
      return dot(batchnorm_forward_train(x, lay, g, be, 1e-5, c), u);
    };
    BatchNormCache<double> c;
    batchnorm_forward_train(x, lay, g, be, 1e-5, c);
    Tensor<double> dg(g.shape), db(be.shape);
    auto dx = batchnorm_backward(u, lay, g, c, dg, db);
    out.push_back(check_entries("batchnorm.input", x.values, dx.values, loss));
    out.push_back(check_entries("batchnorm.gamma", g.values, dg.values, loss));
    out.push_back(check_entries("batchnorm.beta", be.values, db.values, loss));
  }
  {  // dense
    auto x = random_tensor({3, 5}, rng);
    auto w = random_tensor({4, 5}, rng);
    auto b = random_tensor({4}, rng);
    auto u = random_tensor({3, 4}, rng);
    auto loss = [&] { return dot(dense_forward(x, w, b), u); };
    Tensor<double> dw(w.shape), db(b.shape);
    auto dx = dense_backward(x, w, u, dw, db);
    out.push_back(check_entries("dense.input", x.values, dx.values, loss));
    out.push_back(check_entries("dense.weight", w.values, dw.values, loss));
    out.push_back(check_entries("dense.bias", b.values, db.values, loss));
  }
  {  // relu; entries kept at least 0.05 from zero
    Tensor<double> x({40});
    for (auto& v : x.values) v = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.05, 1.0);
    auto u = random_tensor({40}, rng);
    auto loss = [&] {
      auto y = x;
      relu_inplace(y);
      return dot(y, u);
    };
    auto y = x;
    relu_inplace(y);
    auto dy = u;
    relu_backward_inplace(y, dy);
    out.push_back(check_entries("relu.input", x.values, dy.values, loss));
  }
  {  // max pool; a shuffled ramp keeps every window's entries 0.01 apart
    Tensor<double> x({2, 2, 4, 6});
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(order[i]);
    auto u = random_tensor({2, 2, 2, 3}, rng);
    auto loss = [&] {
      std::vector<std::uint32_t> am;
      return dot(maxpool2x2_forward(x, am), u);
    };
    std::vector<std::uint32_t> am;
    maxpool2x2_forward(x, am);
    auto dx = maxpool2x2_backward(u, am, x.shape);
    out.push_back(check_entries("maxpool.input", x.values, dx.values, loss));
  }
  {  // global average pool
    auto x = random_tensor({2, 3, 2, 2}, rng);
    auto u = random_tensor({2, 3}, rng);
    auto loss = [&] { return dot(global_avg_pool_forward(x), u); };
    auto dx = global_avg_pool_backward(u, x.shape);
    out.push_back(check_entries("gap.input", x.values, dx.values, loss));
  }
  {  // l2 normalization
    auto z = random_tensor({3, 6}, rng);
    auto u = random_tensor({3, 6}, rng);
    auto loss = [&] {
      std::vector<double> n;
      return dot(l2_normalize_forward(z, n), u);
    };
    std::vector<double> n;
    auto e = l2_normalize_forward(z, n);
    auto dz = l2_normalize_backward(e, n, u);
    out.push_back(check_entries("l2norm.input", z.values, dz.values, loss));
  }
  return out;
}

inline std::vector<dsp::Waveform> random_clips(std::size_t n, std::size_t len, Rng& rng) {
  std::vector<dsp::Waveform> clips(n);
  for (auto& c : clips) {
    c.sample_rate = dsp::kModelSampleRate;
    c.samples.resize(len);
    const double f = rng.uniform(100.0, 3000.0);
    for (std::size_t i = 0; i < len; ++i) {
      c.samples[i] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 16000.0) +
                                        0.05 * rng.normal());
    }
  }
  return clips;
}

/// Every max-pool choice and ReLU sign of a train-mode forward pass.
inline std::vector<std::uint32_t> activation_pattern(const nn::EncoderModel<double>& m, const Tensor<double>& input) {
  const auto r = nn::detail::forward_core<double>(m, input, nn::Mode::Train, nullptr);
  std::vector<std::uint32_t> s;
  for (std::size_t b = 0; b < r.cache->blocks.size(); ++b) {
    const auto& blk = r.cache->blocks[b];
    s.insert(s.end(), blk.argmax.begin(), blk.argmax.end());
    const auto& g = m.params[m.bn_gamma(b)];
    const auto& be = m.params[m.bn_beta(b)];
    const std::size_t ch = blk.pre_pool[1], inner = blk.pre_pool[2] * blk.pre_pool[3];
    for (std::size_t i = 0; i < blk.bn.xhat.size(); ++i) {
      const std::size_t c = (i / inner) % ch;
      s.push_back(g[c] * blk.bn.xhat[i] + be[c] > 0.0 ? 1u : 0u);
    }
  }
  return s;
}

/// Whole-encoder check on the tiny architecture in double precision; the
/// loss is <u, e(x)> for a fixed random upstream u.
inline std::vector<GradReport> check_tiny_encoder(std::uint64_t seed, std::size_t batch = 3) {
  using namespace sse::nn;
  Rng rng(seed);
  const auto arch = EncoderArch::tiny();
  auto model = init_encoder<double>(arch, seed);
  // Non-trivial affine parameters so every gradient path is exercised.
  for (auto idx : {model.in_gamma(), model.in_beta(), model.rgb_bias()}) {
    for (auto& v : model.params[idx].values) v += 0.2 * rng.normal();
  }
  for (std::size_t b = 0; b < model.blocks(); ++b) {
    for (auto& v : model.params[model.bn_gamma(b)].values) v += 0.2 * rng.normal();
    for (auto& v : model.params[model.bn_beta(b)].values) v += 0.2 * rng.normal();
  }
  const auto clips = random_clips(batch, arch.clip_samples, rng);
  const FrontEnd fe(arch);
  const auto input = fe.batch<double>(clips);
  auto u = random_tensor({batch, arch.embedding_dim}, rng);

  model.touch();
  auto fwd = forward_features(model, input, Mode::Train);
  const auto grads = encode_backward(model, *fwd.cache, u);
  auto loss = [&] {
    return dot(detail::forward_core<double>(model, input, Mode::Train, nullptr).embeddings, u);
  };
  const auto base = activation_pattern(model, input);
  auto switched = [&] { return activation_pattern(model, input) != base; };
  std::vector<GradReport> out;
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    out.push_back(check_entries("encoder." + model.param_names[p], model.params[p].values, grads[p].values, loss,
                                1e-3, switched));
  }
  return out;
}

inline std::vector<double> random_unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  std::vector<double> e(rows * dim);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      e[i * dim + k] = rng.normal();
      s += e[i * dim + k] * e[i * dim + k];
    }
    for (std::size_t k = 0; k < dim; ++k) e[i * dim + k] /= std::sqrt(s);
  }
  return e;
}

// A 2B-row batch: originals then transforms, slots drawn from a small set of
// tracks so that every relation occurs.
inline std::vector<objective::RowMeta> random_batch_meta(std::size_t b, Rng& rng) {
  std::vector<objective::RowMeta> meta(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto track = rng.below(b / 2 + 1);
    meta[i] = {i, "t" + std::to_string(track), "g" + std::to_string(track % 3), "m" + std::to_string(track % 2)};
    meta[b + i] = meta[i];
  }
  return meta;
}

/// Largest relative error of the triplet-loss embedding gradient over random
/// batches, against central differences with h = 1e-6 and a floor of 1% of
/// the largest analytic entry.
inline double check_triplet_gradient(std::uint64_t seed, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t b = 4 + rng.below(4), dim = 5, rows = 2 * b;
    const auto meta = random_batch_meta(b, rng);
    auto e = random_unit_rows(rows, dim, rng);
    const auto terms = objective::mine_triplets(meta, objective::pairwise_distances(e, rows, dim));
    const auto analytic = objective::total_loss(terms, e, rows, dim).grad;
    double gmax = 0.0;
    for (double g : analytic) gmax = std::max(gmax, std::abs(g));
    const double h = 1e-6;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double keep = e[i];
      e[i] = keep + h;
      const double up = objective::total_loss(terms, e, rows, dim).breakdown.total;
      e[i] = keep - h;
      const double down = objective::total_loss(terms, e, rows, dim).breakdown.total;
      e[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_error(analytic[i], numeric, std::max(1e-2 * gmax, 1e-12)));
    }
  }
  return worst;
}

}  // namespace sse::testing
