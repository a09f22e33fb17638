#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "convrec/data/dataset.hpp"
#include "convrec/data/examples.hpp"
#include "convrec/error.hpp"
#include "convrec/eval/metrics.hpp"
#include "convrec/model/convrec.hpp"

namespace convrec::eval {

using data::EvalMode;
using data::NegativeProtocol;

inline std::string protocol_string(const NegativeProtocol& p) {
  return p.kind == NegativeProtocol::Kind::all_items ? "all_items" : "sampled(" + std::to_string(p.count) + ")";
}

// Accepts "all_items", "sampled(N)" or a bare count.
inline NegativeProtocol parse_protocol(const std::string& text) {
  if (text == "all_items" || text == "all") return NegativeProtocol::all_items();
  std::string digits = text;
  if (digits.rfind("sampled(", 0) == 0 && digits.back() == ')') digits = digits.substr(8, digits.size() - 9);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(digits, &used);
    if (used == digits.size() && n > 0) return NegativeProtocol::sampled(static_cast<std::size_t>(n));
  } catch (const std::exception&) {
  }
  throw ConfigError("protocol must be 'all_items' or 'sampled(N)', got '" + text + "'");
}

struct EvalOptions {
  EvalMode mode = EvalMode::test;
  NegativeProtocol protocol = NegativeProtocol::sampled(100);
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t sequence_length = 50;
  std::size_t threads = 1;
};

struct MetricReport {
  std::size_t k = 10;
  std::string protocol;
  double hr_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t evaluated_users = 0;
  std::size_t excluded_users = 0;
  std::vector<RankResult> ranks;
};

inline MetricReport summarize(std::vector<RankResult> ranks, std::size_t k, std::string protocol,
                              std::size_t excluded) {
  MetricReport r;
  r.k = k;
  r.protocol = std::move(protocol);
  r.hr_at_k = hit_rate_at_k(ranks, k);
  r.ndcg_at_k = ndcg_at_k(ranks, k);
  r.evaluated_users = ranks.size();
  r.excluded_users = excluded;
  r.ranks = std::move(ranks);
  return r;
}

// Negative sampling for each user depends only on (seed, user), so results
// do not depend on the thread count.
inline std::mt19937_64 user_rng(std::uint64_t seed, std::uint32_t user) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), user};
  return std::mt19937_64(seq);
}

// `scorer(example)` returns one score per candidate, positive first.
template <class Scorer>
MetricReport evaluate_with(Scorer&& scorer, const data::Dataset& ds, const EvalOptions& options) {
  std::vector<std::uint32_t> users;
  for (const auto& seq : ds.users)
    if (seq.evaluable()) users.push_back(seq.user_index);
  if (users.empty()) throw DataError("no evaluable users (every user has fewer than three events)");

  std::vector<RankResult> ranks(users.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < users.size(); i += step) {
      const auto& seq = ds.users[users[i]];
      auto rng = user_rng(options.seed, seq.user_index);
      auto ex = data::make_eval_example(ds, seq, options.sequence_length, options.mode, options.protocol, rng);
      const std::vector<double> scores = scorer(*ex);
      ranks[i] = {seq.user_index, rank_from_scores(scores), scores.size()};
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, users.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return summarize(std::move(ranks), options.k, protocol_string(options.protocol), ds.users.size() - users.size());
}

inline MetricReport evaluate(const model::ConvRecModel& m, const data::Dataset& ds, const EvalOptions& options) {
  return evaluate_with([&](const data::FixedLengthExample& ex) { return m.score_candidates(ex); }, ds, options);
}

struct GroupReport {
  std::string name;
  std::optional<MetricReport> report;  // empty group -> absent
};

// Top = users whose training length is at least that of the ceil(q*n)-th
// longest evaluated user; Bottom = the rest.
inline std::vector<GroupReport> split_top_bottom(const MetricReport& full, const data::Dataset& ds, double quantile) {
  if (!(quantile > 0.0) || quantile > 1.0) throw ConfigError("top_bottom quantile must lie in (0, 1]");
  std::vector<std::size_t> lengths;
  for (const auto& r : full.ranks) lengths.push_back(ds.users[r.user].training_length());
  std::vector<std::size_t> sorted = lengths;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto top_count = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(sorted.size()) - 1e-9));
  const std::size_t threshold = sorted[std::max<std::size_t>(top_count, 1) - 1];
  std::vector<RankResult> top, bottom;
  for (std::size_t i = 0; i < full.ranks.size(); ++i) (lengths[i] >= threshold ? top : bottom).push_back(full.ranks[i]);
  auto make = [&](std::string name, std::vector<RankResult> ranks) {
    GroupReport g{std::move(name), std::nullopt};
    if (!ranks.empty()) g.report = summarize(std::move(ranks), full.k, full.protocol, 0);
    return g;
  };
  return {make("top", std::move(top)), make("bottom", std::move(bottom))};
}

inline std::vector<GroupReport> evaluate_top_bottom(const model::ConvRecModel& m, const data::Dataset& ds,
                                                    const EvalOptions& options, double quantile) {
  return split_top_bottom(evaluate(m, ds, options), ds, quantile);
}

// Re-evaluates the same weights with a different maximum input length.
inline std::vector<GroupReport> evaluate_length_sweep(const model::ConvRecModel& m, const data::Dataset& ds,
                                                      const EvalOptions& options,
                                                      const std::vector<std::size_t>& lengths) {
  std::vector<GroupReport> out;
  for (std::size_t L : lengths) {
    EvalOptions o = options;
    o.sequence_length = L;
    out.push_back({"L=" + std::to_string(L), evaluate(m, ds, o)});
  }
  return out;
}

}  // namespace convrec::eval
