#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "convrec/error.hpp"

namespace convrec::eval {

struct RankResult {
  std::uint32_t user = 0;
  std::size_t rank = 1;
  std::size_t candidate_count = 1;
};

// 1-based rank of scores[0] among all scores. Negatives that tie the
// positive are ranked above it.
inline std::size_t rank_from_scores(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("rank_from_scores: no candidates");
  const double positive = scores[0];
  std::size_t rank = 1;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (!(scores[i] < positive)) ++rank;
  return rank;
}

inline void require_ranks(std::span<const RankResult> ranks, std::size_t k) {
  if (ranks.empty()) throw UndefinedMetric("metric undefined over an empty set of users");
  if (k == 0) throw ConfigError("k must be at least 1");
}

inline double hit_rate_at_k(std::span<const RankResult> ranks, std::size_t k) {
  require_ranks(ranks, k);
  std::size_t hits = 0;
  for (const auto& r : ranks) hits += r.rank <= k;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double ndcg_gain(std::size_t rank, std::size_t k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

inline double ndcg_at_k(std::span<const RankResult> ranks, std::size_t k) {
  require_ranks(ranks, k);
  double total = 0.0;
  for (const auto& r : ranks) total += ndcg_gain(r.rank, k);
  return total / static_cast<double>(ranks.size());
}

}  // namespace convrec::eval
