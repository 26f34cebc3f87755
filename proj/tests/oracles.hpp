#pragma once

// Brute-force oracles shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sse/index/index.hpp"

namespace sse::testing {

// Brute-force pair AP. Each pair's rank is found by counting the pairs that
// precede it, then each category's list is filtered and scored from scratch.
struct BruteCategory {
  std::vector<std::uint8_t> relevance;
  double ap = 0.0;
};

inline double brute_force_map(const std::vector<std::vector<double>>& e, const std::vector<std::string>& labels,
                       std::map<std::string, BruteCategory>* per_category = nullptr) {
  const std::size_t n = e.size();
  struct P {
    std::size_t i, j;
    double d;
  };
  std::vector<P> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < e[i].size(); ++k) s += (e[i][k] - e[j][k]) * (e[i][k] - e[j][k]);
      pairs.push_back({i, j, std::sqrt(s)});
    }
  }
  std::vector<std::size_t> at_rank(pairs.size());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    std::size_t before = 0;
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      const bool earlier = pairs[b].d < pairs[a].d ||
                           (pairs[b].d == pairs[a].d && (pairs[b].i < pairs[a].i ||
                                                         (pairs[b].i == pairs[a].i && pairs[b].j < pairs[a].j)));
      before += earlier;
    }
    at_rank[before] = a;
  }
  std::vector<std::string> cats(labels.begin(), labels.end());
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& c : cats) {
    // The list for c keeps only pairs with at least one row in c.
    std::vector<std::uint8_t> relevance;
    for (std::size_t r = 0; r < at_rank.size(); ++r) {
      const auto& p = pairs[at_rank[r]];
      if (labels[p.i] == c || labels[p.j] == c) relevance.push_back(labels[p.i] == c && labels[p.j] == c);
    }
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < relevance.size(); ++r) {
      if (!relevance[r]) continue;
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) continue;
    total += sum / static_cast<double>(hits);
    ++used;
    if (per_category) (*per_category)[c] = {relevance, sum / static_cast<double>(hits)};
  }
  return used ? total / static_cast<double>(used) : -1.0;
}

/// Sort-everything oracle: distance in long double, ties by position.
inline std::vector<std::size_t> brute_force_knn(const std::vector<index::EmbeddingRecord>& records,
                                         const std::vector<float>& q, std::size_t k,
                                         const std::string* exclude = nullptr) {
  std::vector<std::pair<long double, std::size_t>> all;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (exclude && records[i].clip.track_id == *exclude) continue;
    long double s = 0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const long double diff = static_cast<long double>(q[d]) - records[i].embedding[d];
      s += diff * diff;
    }
    all.emplace_back(std::sqrt(s), i);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace sse::testing
