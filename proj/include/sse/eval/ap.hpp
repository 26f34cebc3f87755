#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sse/core/error.hpp"

namespace sse::eval {

/// Mean over positive positions k of (positives in the top k) / k.
inline double average_precision(std::span<const std::uint8_t> relevance) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  require(hits > 0, ErrorCode::UndefinedAP, "average precision needs at least one positive");
  return sum / static_cast<double>(hits);
}

enum class Annotation { Genre, Mood, Track };

inline std::string to_string(Annotation a) {
  switch (a) {
    case Annotation::Genre: return "genre";
    case Annotation::Mood: return "mood";
    case Annotation::Track: return "track";
  }
  return "?";
}

inline Annotation parse_annotation(const std::string& s) {
  if (s == "genre") return Annotation::Genre;
  if (s == "mood") return Annotation::Mood;
  if (s == "track") return Annotation::Track;
  throw Error(ErrorCode::UnknownAnnotation, "unknown annotation type '" + s + "'");
}

/// Rows of embeddings with their labels. Label arrays may be left empty when
/// an annotation is unavailable.
struct LabeledEmbeddingSet {
  std::vector<std::vector<double>> embeddings;
  std::vector<std::string> track_ids;
  std::vector<std::string> genres;
  std::vector<std::string> moods;

  std::size_t size() const { return embeddings.size(); }

  const std::vector<std::string>& labels(Annotation a) const {
    switch (a) {
      case Annotation::Genre: return genres;
      case Annotation::Mood: return moods;
      default: return track_ids;
    }
  }
};

struct ApReport {
  std::string encoder;
  std::string annotation_type;
  std::map<std::string, double> per_category;
  std::vector<std::string> excluded_categories;  // no positive pair
  double map = 0.0;
  std::size_t n_embeddings = 0;
};

inline void to_json(nlohmann::json& j, const ApReport& r) {
  j = nlohmann::json{{"encoder", r.encoder},
                     {"annotation_type", r.annotation_type},
                     {"per_category", r.per_category},
                     {"excluded_categories", r.excluded_categories},
                     {"map", r.map},
                     {"n_embeddings", r.n_embeddings}};
}

inline void from_json(const nlohmann::json& j, ApReport& r) {
  j.at("encoder").get_to(r.encoder);
  j.at("annotation_type").get_to(r.annotation_type);
  j.at("per_category").get_to(r.per_category);
  if (j.contains("excluded_categories")) j.at("excluded_categories").get_to(r.excluded_categories);
  j.at("map").get_to(r.map);
  j.at("n_embeddings").get_to(r.n_embeddings);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Unordered pairs (i < j) ranked by ascending distance, ties by (i, j). The
/// list for category c holds the pairs with at least one row labelled c; a
/// pair is relevant when both rows carry c.
inline ApReport map_score(const LabeledEmbeddingSet& set, Annotation annotation, const std::string& encoder = "") {
  const auto& labels = set.labels(annotation);
  const std::size_t n = set.size();
  require(!labels.empty() && labels.size() == n, ErrorCode::UnknownAnnotation,
          "embedding set carries no " + to_string(annotation) + " labels");
  require(n >= 2, ErrorCode::NotEnoughData, "mAP needs at least two embeddings");
  for (const auto& e : set.embeddings) {
    require(e.size() == set.embeddings.front().size(), ErrorCode::ShapeMismatch, "embeddings differ in dimension");
  }

  struct Pair {
    double d;
    std::uint32_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      pairs.push_back({euclidean(set.embeddings[i], set.embeddings[j]), static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(j)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  // Category ids in label order, so reports list categories sorted.
  std::map<std::string, std::size_t> ids;
  for (const auto& l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, id] : ids) id = next++;
  std::vector<std::size_t> row_cat(n);
  for (std::size_t i = 0; i < n; ++i) row_cat[i] = ids.at(labels[i]);

  // Category c ranks only the pairs touching c: relevant when both rows are
  // in c, irrelevant when the other row is in a different category.
  std::vector<std::size_t> hits(ids.size(), 0), ranks(ids.size(), 0);
  std::vector<double> sums(ids.size(), 0.0);
  for (const auto& p : pairs) {
    const auto ci = row_cat[p.i], cj = row_cat[p.j];
    ++ranks[ci];
    if (ci != cj) {
      ++ranks[cj];
      continue;
    }
    ++hits[ci];
    sums[ci] += static_cast<double>(hits[ci]) / static_cast<double>(ranks[ci]);
  }

  ApReport report;
  report.encoder = encoder;
  report.annotation_type = to_string(annotation);
  report.n_embeddings = n;
  double total = 0.0;
  for (const auto& [label, id] : ids) {
    if (hits[id] == 0) {
      report.excluded_categories.push_back(label);
      continue;
    }
    report.per_category[label] = sums[id] / static_cast<double>(hits[id]);
    total += report.per_category[label];
  }
  require(!report.per_category.empty(), ErrorCode::UndefinedAP,
          "no " + to_string(annotation) + " category has a positive pair");
  report.map = total / static_cast<double>(report.per_category.size());
  return report;
}

}  // namespace sse::eval
