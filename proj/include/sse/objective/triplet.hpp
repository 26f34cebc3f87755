#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "sse/core/error.hpp"

namespace sse::objective {

enum class Relation { Transform = 0, SameTrack = 1, Genre = 2, Mood = 3 };
inline constexpr std::size_t kRelations = 4;
inline constexpr std::array<Relation, kRelations> kAllRelations{Relation::Transform, Relation::SameTrack,
                                                                Relation::Genre, Relation::Mood};
inline constexpr std::array<double, kRelations> kDefaultWeights{1.0, 0.5, 0.1, 0.1};
inline constexpr double kDefaultMargin = 0.2;

inline std::string to_string(Relation r) {
  static constexpr const char* kNames[] = {"transform", "same_track", "genre", "mood"};
  return kNames[static_cast<std::size_t>(r)];
}

/// Row-major B x B distance matrix.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> d;

  double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
};

/// ||e_i - e_j|| through sqrt(2 - 2 e_i.e_j), clamped to [0, 2]; rows are
/// expected to be unit vectors.
inline DistanceMatrix pairwise_distances(const std::vector<double>& e, std::size_t rows, std::size_t dim) {
  require(e.size() == rows * dim, ErrorCode::ShapeMismatch, "embedding buffer does not match rows x dim");
  for (double v : e) require(std::isfinite(v), ErrorCode::InvalidEmbedding, "non-finite embedding value");
  DistanceMatrix m{rows, std::vector<double>(rows * rows, 0.0)};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = i + 1; j < rows; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += e[i * dim + k] * e[j * dim + k];
      const double d = std::sqrt(std::clamp(2.0 - 2.0 * dot, 0.0, 4.0));
      m.d[i * rows + j] = m.d[j * rows + i] = d;
    }
  }
  return m;
}

/// Labels of one row of the 2B-row batch: originals first, then transforms.
struct RowMeta {
  std::size_t slot = 0;  // originals and their transforms share a slot
  std::string track_id;
  std::string genre;
  std::string mood;
};

struct TripletTerm {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  Relation relation = Relation::Transform;
  double weight = 1.0;
};

/// Finest relation linking rows a and b for the purpose of choosing
/// positives: transform > same_track > genre / mood.
inline bool is_positive(const std::vector<RowMeta>& m, std::size_t a, std::size_t b, Relation r) {
  if (a == b) return false;
  const bool same_slot = m[a].slot == m[b].slot;
  const bool same_track = m[a].track_id == m[b].track_id;
  switch (r) {
    case Relation::Transform: return same_slot;
    case Relation::SameTrack: return !same_slot && same_track;
    case Relation::Genre: return !same_track && m[a].genre == m[b].genre;
    case Relation::Mood: return !same_track && m[a].mood == m[b].mood;
  }
  return false;
}

/// Rows lacking relation r with the anchor.
inline bool is_negative(const std::vector<RowMeta>& m, std::size_t a, std::size_t b, Relation r) {
  if (a == b) return false;
  switch (r) {
    case Relation::Transform: return m[a].slot != m[b].slot;
    case Relation::SameTrack: return m[a].track_id != m[b].track_id;
    case Relation::Genre: return m[a].genre != m[b].genre;
    case Relation::Mood: return m[a].mood != m[b].mood;
  }
  return false;
}

/// Semi-hard negative: the closest n with d(a, n) > d(a, p); without one, the
/// closest negative overall (largest violation). Ties go to the lower index.
inline std::vector<TripletTerm> mine_triplets(const std::vector<RowMeta>& meta, const DistanceMatrix& dist,
                                              const std::array<double, kRelations>& weights = kDefaultWeights) {
  require(meta.size() == dist.n, ErrorCode::ShapeMismatch, "row metadata does not match the distance matrix");
  std::vector<TripletTerm> terms;
  const std::size_t n = meta.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (Relation r : kAllRelations) {
      for (std::size_t p = 0; p < n; ++p) {
        if (!is_positive(meta, a, p, r)) continue;
        const double dap = dist(a, p);
        std::size_t semi = n, hard = n;
        for (std::size_t c = 0; c < n; ++c) {
          if (!is_negative(meta, a, c, r)) continue;
          const double dan = dist(a, c);
          if (hard == n || dan < dist(a, hard)) hard = c;
          if (dan > dap && (semi == n || dan < dist(a, semi))) semi = c;
        }
        if (hard == n) continue;
        terms.push_back({a, p, semi != n ? semi : hard, r, weights[static_cast<std::size_t>(r)]});
      }
    }
  }
  return terms;
}

inline double triplet_loss(double d_ap, double d_an, double margin) { return std::max(0.0, d_ap - d_an + margin); }

struct LossBreakdown {
  std::array<double, kRelations> mean{};
  std::array<std::size_t, kRelations> count{};
  std::array<double, kRelations> weight = kDefaultWeights;
  double total = 0.0;
};

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json::object();
  for (Relation r : kAllRelations) {
    const auto i = static_cast<std::size_t>(r);
    j[to_string(r)] = {{"mean", b.mean[i]}, {"count", b.count[i]}};
  }
  j["total"] = b.total;
}

struct LossResult {
  LossBreakdown breakdown;
  std::vector<double> grad;  // rows x dim, d total / d embeddings
};

/// total = sum_r w_r * mean_r(hinge). Distances are recomputed from the
/// embeddings as sqrt(2 - 2 e_a.e_b); the gradient of each distance is
/// -e_b / d (zero where d = 0).
inline LossResult total_loss(const std::vector<TripletTerm>& terms, const std::vector<double>& e, std::size_t rows,
                             std::size_t dim, double margin = kDefaultMargin) {
  require(e.size() == rows * dim, ErrorCode::ShapeMismatch, "embedding buffer does not match rows x dim");
  LossResult out;
  out.grad.assign(rows * dim, 0.0);
  auto dist = [&](std::size_t a, std::size_t b) {
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k) dot += e[a * dim + k] * e[b * dim + k];
    return std::sqrt(std::clamp(2.0 - 2.0 * dot, 0.0, 4.0));
  };
  auto add_dist_grad = [&](std::size_t a, std::size_t b, double d, double scale) {
    if (d <= 0.0) return;
    const double s = -scale / d;
    for (std::size_t k = 0; k < dim; ++k) {
      out.grad[a * dim + k] += s * e[b * dim + k];
      out.grad[b * dim + k] += s * e[a * dim + k];
    }
  };
  for (const auto& t : terms) {
    require(t.anchor < rows && t.positive < rows && t.negative < rows, ErrorCode::ShapeMismatch,
            "triplet index out of range");
    out.breakdown.count[static_cast<std::size_t>(t.relation)] += 1;
  }
  std::array<double, kRelations> sums{};
  for (const auto& t : terms) {
    const auto r = static_cast<std::size_t>(t.relation);
    out.breakdown.weight[r] = t.weight;
    const double dap = dist(t.anchor, t.positive);
    const double dan = dist(t.anchor, t.negative);
    const double l = triplet_loss(dap, dan, margin);
    sums[r] += l;
    if (l > 0.0) {
      const double scale = t.weight / static_cast<double>(out.breakdown.count[r]);
      add_dist_grad(t.anchor, t.positive, dap, scale);
      add_dist_grad(t.anchor, t.negative, dan, -scale);
    }
  }
  for (std::size_t r = 0; r < kRelations; ++r) {
    if (out.breakdown.count[r] == 0) continue;
    out.breakdown.mean[r] = sums[r] / static_cast<double>(out.breakdown.count[r]);
    out.breakdown.total += out.breakdown.weight[r] * out.breakdown.mean[r];
  }
  return out;
}

}  // namespace sse::objective
