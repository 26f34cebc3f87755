#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "sse/objective/train.hpp"
#include "sse/pipeline/synth.hpp"
#include "gradcheck.hpp"
#include "test_helpers.hpp"

using namespace sse;
using namespace sse::objective;
using sse::testing::error_code_of;
using sse::testing::random_batch_meta;
using sse::testing::random_unit_rows;

namespace {

// Relation definitions restated from the row labels.
bool oracle_positive(const RowMeta& a, const RowMeta& p, Relation r) {
  switch (r) {
    case Relation::Transform: return a.slot == p.slot;
    case Relation::SameTrack: return a.slot != p.slot && a.track_id == p.track_id;
    case Relation::Genre: return a.track_id != p.track_id && a.genre == p.genre;
    case Relation::Mood: return a.track_id != p.track_id && a.mood == p.mood;
  }
  return false;
}

bool oracle_negative(const RowMeta& a, const RowMeta& n, Relation r) {
  switch (r) {
    case Relation::Transform: return a.slot != n.slot;
    case Relation::SameTrack: return a.track_id != n.track_id;
    case Relation::Genre: return a.genre != n.genre;
    case Relation::Mood: return a.mood != n.mood;
  }
  return false;
}

std::vector<double> circle_points(const std::vector<double>& angles, std::size_t dim) {
  std::vector<double> e(angles.size() * dim, 0.0);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    e[i * dim] = std::cos(angles[i]);
    e[i * dim + 1] = std::sin(angles[i]);
  }
  return e;
}

double chord_angle(double d) { return 2.0 * std::asin(d / 2.0); }

std::filesystem::path tiny_corpus_dir() {
  return std::filesystem::temp_directory_path() / "sse_test_objective_corpus";
}

const pipeline::Catalog& tiny_corpus() {
  static const pipeline::Catalog catalog = [] {
    pipeline::SynthConfig cfg;
    cfg.n_tracks = 24;
    cfg.genres = 2;
    cfg.moods = 2;
    cfg.seed = 4;
    cfg.min_duration_s = 11.0;
    cfg.max_duration_s = 12.0;
    std::filesystem::remove_all(tiny_corpus_dir());
    return pipeline::generate_synthetic_corpus(cfg, tiny_corpus_dir());
  }();
  return catalog;
}

TrainConfig tiny_train_config(std::size_t steps) {
  TrainConfig c;
  c.max_steps = steps;
  c.batch_size = 8;
  c.eval_every = 20;
  c.clips_per_track = 4;
  c.seed = 9;
  c.learning_rate = 3e-3;
  c.chain.time_shift_max = 0.2;
  c.early_stop_patience = 1000;
  return c;
}

}  // namespace

TEST_CASE("pairwise distances on the unit sphere", "[objective]") {
  const std::vector<double> e{1, 0, 0, 1, 0, 0, 0, 1, 0, -1, 0, 0};
  const auto d = pairwise_distances(e, 4, 3);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(d(0, 3) == 2.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(d(i, j) == d(j, i));
  }
  auto bad = e;
  bad[4] = std::nan("");
  CHECK(error_code_of([&] { pairwise_distances(bad, 4, 3); }) == ErrorCode::InvalidEmbedding);
  bad[4] = INFINITY;
  CHECK(error_code_of([&] { pairwise_distances(bad, 4, 3); }) == ErrorCode::InvalidEmbedding);
}

TEST_CASE("sphere distances stay in [0, 2] and match the direct norm", "[objective][property]") {
  Rng rng(12);
  const auto e = random_unit_rows(40, 16, rng);
  const auto d = pairwise_distances(e, 40, 16);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 40; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 16; ++k) s += (e[i * 16 + k] - e[j * 16 + k]) * (e[i * 16 + k] - e[j * 16 + k]);
      REQUIRE(d(i, j) >= 0.0);
      REQUIRE(d(i, j) <= 2.0);
      REQUIRE(std::abs(d(i, j) - std::sqrt(s)) < 1e-7);
    }
  }
}

TEST_CASE("hinge values", "[objective]") {
  CHECK(triplet_loss(0.3, 0.4, 0.2) == Catch::Approx(0.1));
  CHECK(triplet_loss(0.3, 0.6, 0.2) == 0.0);
  CHECK(triplet_loss(0.5, 0.1, 0.2) == Catch::Approx(0.6));
  CHECK(triplet_loss(0.0, 2.0, 0.2) == 0.0);
}

TEST_CASE("semi-hard mining picks the closest farther negative", "[objective]") {
  // Row 1 is the transform of row 0 at distance 0.3; rows 2..4 are other
  // slots at 0.2, 0.4 and 0.9 from the anchor.
  std::vector<RowMeta> meta{{0, "a", "ga", "ma"}, {0, "a", "ga", "ma"}, {1, "b", "gb", "mb"},
                            {2, "c", "gc", "mc"}, {3, "d", "gd", "md"}};
  DistanceMatrix d{5, std::vector<double>(25, 1.0)};
  auto set = [&](std::size_t i, std::size_t j, double v) { d.d[i * 5 + j] = d.d[j * 5 + i] = v; };
  for (std::size_t i = 0; i < 5; ++i) set(i, i, 0.0);
  set(0, 1, 0.3);
  set(0, 2, 0.2);
  set(0, 3, 0.4);
  set(0, 4, 0.9);
  auto terms = mine_triplets(meta, d);
  const auto it = std::find_if(terms.begin(), terms.end(), [](const TripletTerm& t) {
    return t.anchor == 0 && t.positive == 1 && t.relation == Relation::Transform;
  });
  REQUIRE(it != terms.end());
  CHECK(it->negative == 3);
  CHECK(triplet_loss(0.3, d(0, it->negative), 0.2) == Catch::Approx(0.1));

  // Without a farther negative, the closest one is used.
  set(0, 3, 0.25);
  set(0, 4, 0.28);
  terms = mine_triplets(meta, d);
  const auto hard = std::find_if(terms.begin(), terms.end(), [](const TripletTerm& t) {
    return t.anchor == 0 && t.positive == 1 && t.relation == Relation::Transform;
  });
  REQUIRE(hard != terms.end());
  CHECK(hard->negative == 2);
}

TEST_CASE("distinct labels leave only transform terms", "[objective]") {
  const std::size_t b = 6;
  std::vector<RowMeta> meta(2 * b);
  for (std::size_t i = 0; i < 2 * b; ++i) {
    const auto s = i % b;
    meta[i] = {s, "t" + std::to_string(s), "g" + std::to_string(s), "m" + std::to_string(s)};
  }
  Rng rng(3);
  const auto e = random_unit_rows(2 * b, 8, rng);
  const auto terms = mine_triplets(meta, pairwise_distances(e, 2 * b, 8));
  CHECK(terms.size() == 2 * b);
  std::vector<int> per_anchor(2 * b, 0);
  for (const auto& t : terms) {
    CHECK(t.relation == Relation::Transform);
    CHECK(t.positive == (t.anchor + b) % (2 * b));
    ++per_anchor[t.anchor];
  }
  for (int c : per_anchor) CHECK(c == 1);
}

TEST_CASE("a batch holding one track has no genre or mood terms", "[objective]") {
  std::vector<RowMeta> meta{{0, "x", "g", "m"}, {1, "x", "g", "m"}, {0, "x", "g", "m"}, {1, "x", "g", "m"}};
  Rng rng(5);
  const auto e = random_unit_rows(4, 4, rng);
  for (const auto& t : mine_triplets(meta, pairwise_distances(e, 4, 4))) {
    CHECK(t.relation == Relation::Transform);
  }
}

TEST_CASE("mined triplets respect relations, precedence and the semi-hard rule", "[objective][property]") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 3 + rng.below(8);
    const auto meta = random_batch_meta(b, rng);
    const auto e = random_unit_rows(2 * b, 6, rng);
    const auto d = pairwise_distances(e, 2 * b, 6);
    for (const auto& t : mine_triplets(meta, d)) {
      const auto& a = meta[t.anchor];
      REQUIRE(t.anchor != t.positive);
      REQUIRE(oracle_positive(a, meta[t.positive], t.relation));
      REQUIRE(oracle_negative(a, meta[t.negative], t.relation));
      if (t.relation != Relation::Transform) REQUIRE(meta[t.positive].slot != a.slot);
      if (t.relation == Relation::Genre || t.relation == Relation::Mood) {
        REQUIRE(meta[t.positive].track_id != a.track_id);
      }
      REQUIRE(t.weight == kDefaultWeights[static_cast<std::size_t>(t.relation)]);
      const double dap = d(t.anchor, t.positive);
      double best_semi = INFINITY, best_any = INFINITY;
      for (std::size_t n = 0; n < 2 * b; ++n) {
        if (n == t.anchor || !oracle_negative(a, meta[n], t.relation)) continue;
        best_any = std::min(best_any, d(t.anchor, n));
        if (d(t.anchor, n) > dap) best_semi = std::min(best_semi, d(t.anchor, n));
      }
      REQUIRE(d(t.anchor, t.negative) == (std::isfinite(best_semi) ? best_semi : best_any));
    }
  }
}

TEST_CASE("crafted batch has total loss 0.25", "[objective]") {
  // Points on a circle: the two transform terms have hinge 0.1 and 0.3, the
  // genre term hinge 0.5, so total = 1.0 * 0.2 + 0.1 * 0.5.
  const double t0 = 0.0, t1 = chord_angle(0.5), t2 = -chord_angle(0.6), t3 = std::numbers::pi / 3.0,
               t5 = -chord_angle(0.7);
  const double d35 = 2.0 * std::sin((t3 - t5) / 2.0);
  const double t4 = t3 + chord_angle(d35 + 0.1);
  const auto e = circle_points({t0, t1, t2, t3, t4, t5}, 4);
  const std::vector<TripletTerm> terms{{0, 1, 2, Relation::Transform, 1.0},
                                       {3, 4, 5, Relation::Transform, 1.0},
                                       {0, 3, 5, Relation::Genre, 0.1}};
  const auto r = total_loss(terms, e, 6, 4);
  CHECK(r.breakdown.mean[0] == Catch::Approx(0.2).margin(1e-12));
  CHECK(r.breakdown.mean[2] == Catch::Approx(0.5).margin(1e-12));
  CHECK(r.breakdown.count[0] == 2);
  CHECK(r.breakdown.count[1] == 0);
  CHECK(r.breakdown.total == Catch::Approx(0.25).margin(1e-12));
  const nlohmann::json j = r.breakdown;
  CHECK(j.at("transform").at("count") == 2);
  CHECK(j.at("total").get<double>() == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("inactive terms give zero loss and zero gradient", "[objective]") {
  const auto e = circle_points({0.0, 0.05, 3.0}, 3);
  const auto r = total_loss({{0, 1, 2, Relation::Transform, 1.0}}, e, 3, 3);
  CHECK(r.breakdown.total == 0.0);
  for (double g : r.grad) CHECK(g == 0.0);
  const auto none = total_loss({}, e, 3, 3);
  CHECK(none.breakdown.total == 0.0);
}

TEST_CASE("triplet gradient matches central differences", "[objective][grad]") {
  const double worst = sse::testing::check_triplet_gradient(41, 30);
  INFO("max relative error " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("Adam on a separable 2-D toy cuts the loss by 90%", "[objective]") {
  // Identity encoder: the embeddings are normalized free 2-D points, starting
  // with genre A on the right and genre B on the left.
  std::vector<RowMeta> meta;
  for (std::size_t s = 0; s < 8; ++s) {
    const auto slot = s % 4;
    meta.push_back({slot, "t" + std::to_string(slot), slot < 2 ? "A" : "B", "m"});
  }
  Rng rng(6);
  std::vector<nn::Tensor<double>> params{nn::Tensor<double>({8, 2})};
  for (std::size_t i = 0; i < 8; ++i) {
    params[0][2 * i] = (meta[i].genre == "A" ? 1.0 : -1.0) + 0.6 * rng.normal();
    params[0][2 * i + 1] = 0.6 * rng.normal();
  }
  auto opt = nn::make_adam(params, 0.05);
  auto loss_at = [&](std::vector<double>* grad_raw) {
    std::vector<double> e(16);
    std::vector<double> norms(8);
    for (std::size_t i = 0; i < 8; ++i) {
      norms[i] = std::hypot(params[0][2 * i], params[0][2 * i + 1]);
      e[2 * i] = params[0][2 * i] / norms[i];
      e[2 * i + 1] = params[0][2 * i + 1] / norms[i];
    }
    const auto terms = mine_triplets(meta, pairwise_distances(e, 8, 2));
    const auto r = total_loss(terms, e, 8, 2);
    if (grad_raw) {
      grad_raw->assign(16, 0.0);
      for (std::size_t i = 0; i < 8; ++i) {
        const double dot = r.grad[2 * i] * e[2 * i] + r.grad[2 * i + 1] * e[2 * i + 1];
        for (std::size_t k = 0; k < 2; ++k) (*grad_raw)[2 * i + k] = (r.grad[2 * i + k] - dot * e[2 * i + k]) / norms[i];
      }
    }
    return r.breakdown.total;
  };
  const double initial = loss_at(nullptr);
  REQUIRE(initial > 0.0);
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g;
    loss_at(&g);
    std::vector<nn::Tensor<double>> grads{nn::Tensor<double>({8, 2})};
    grads[0].values = g;
    nn::adam_step(params, grads, opt);
  }
  CHECK(loss_at(nullptr) <= 0.1 * initial);
}

TEST_CASE("train config JSON keeps defaults for missing keys", "[objective]") {
  const auto c = nlohmann::json{{"max_steps", 7}, {"learning_rate", 0.01}}.get<TrainConfig>();
  CHECK(c.max_steps == 7);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.margin == kDefaultMargin);
  CHECK(c.batch_size == 32);
  const nlohmann::json round = c;
  CHECK(round.get<TrainConfig>().max_steps == 7);
  TrainConfig bad;
  bad.margin = 0.0;
  CHECK(error_code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("zero steps returns the initial model", "[objective][train]") {
  const auto& catalog = tiny_corpus();
  pipeline::AudioStore audio(catalog);
  const auto model = nn::init_encoder<float>(nn::EncoderArch::tiny(), 2);
  const auto r = train(catalog, model, tiny_train_config(0), audio);
  CHECK(r.steps == 0);
  CHECK(r.log.empty());
  REQUIRE(r.model.params.size() == model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) CHECK(r.model.params[i].values == model.params[i].values);
}

TEST_CASE("training lowers the loss and is deterministic", "[objective][train]") {
  const auto& catalog = tiny_corpus();
  std::size_t n_train = 0, n_val = 0;
  for (const auto& t : catalog.tracks()) {
    n_train += pipeline::assign_split(t.track_id) == pipeline::Split::Train;
    n_val += pipeline::assign_split(t.track_id) == pipeline::Split::Validation;
  }
  REQUIRE(n_train >= 2);
  REQUIRE(n_val >= 1);

  auto run = [&] {
    pipeline::AudioStore audio(catalog);
    std::vector<std::string> lines;
    auto r = train(catalog, nn::init_encoder<float>(nn::EncoderArch::tiny(), 2), tiny_train_config(200), audio,
                   [&](const TrainRecord& rec) { lines.push_back(nlohmann::json(rec).dump()); });
    return std::make_pair(std::move(r), lines);
  };
  const auto [first, log1] = run();
  const auto [second, log2] = run();
  CHECK(log1 == log2);
  CHECK(first.step_totals == second.step_totals);
  REQUIRE(first.step_totals.size() == 200);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    head += first.step_totals[i] / 40.0;
    tail += first.step_totals[160 + i] / 40.0;
  }
  INFO("mean loss first 40 " << head << " last 40 " << tail);
  CHECK(tail < head);
  CHECK(first.log.size() == 10);
  for (const auto& rec : first.log) CHECK(rec.val_genre_map <= first.best_val_map);
}
