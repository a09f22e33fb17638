#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

#include "convrec/data/dataset.hpp"
#include "convrec/error.hpp"
#include "convrec/numerics/tensor.hpp"

namespace convrec::data {

using numerics::Tensor;

inline constexpr std::int64_t kPad = -1;

// Positive target at index 0 followed by the negatives. All candidates carry
// the prediction-time context of the target event.
struct CandidateSet {
  std::vector<std::uint32_t> items;
  std::vector<std::size_t> rows;
  Tensor attributes;  // n x |A|
  Tensor contexts;    // n x |C|

  std::size_t size() const { return items.size(); }
  std::uint32_t positive() const { return items.front(); }
};

struct FixedLengthExample {
  std::uint32_t user = 0;
  std::vector<std::int64_t> input_items;  // kPad for padding
  std::vector<std::size_t> input_rows;    // id-table rows
  Tensor input_attributes;                // L x |A|
  Tensor input_contexts;                  // L x |C|
  Tensor input_calendar;                  // L x 3 raw (year, month, day)
  std::vector<bool> padding_mask;         // true = padding
  CandidateSet candidates;

  std::size_t length() const { return input_items.size(); }
  std::size_t real_length() const {
    return static_cast<std::size_t>(std::count(padding_mask.begin(), padding_mask.end(), false));
  }
};

enum class EvalMode { validation, test };

struct NegativeProtocol {
  enum class Kind { sampled, all_items } kind = Kind::sampled;
  std::size_t count = 100;

  static NegativeProtocol sampled(std::size_t n) { return {Kind::sampled, n}; }
  static NegativeProtocol all_items() { return {Kind::all_items, 0}; }
};

namespace detail {

// Input window = up to L events in [0, end), right-aligned.
inline void fill_inputs(const Dataset& ds, const UserSequence& seq, std::size_t end, std::size_t L,
                        FixedLengthExample& ex) {
  const std::size_t a = ds.attribute_dim;
  const std::size_t c = ds.context_dim;
  ex.user = seq.user_index;
  ex.input_items.assign(L, kPad);
  ex.input_rows.assign(L, ds.vocab.pad_row());
  ex.padding_mask.assign(L, true);
  ex.input_attributes = Tensor({L, a});
  ex.input_contexts = Tensor({L, c});
  ex.input_calendar = Tensor({L, 3});
  const std::size_t real = std::min(L, end);
  const std::size_t first = end - real;
  for (std::size_t k = 0; k < real; ++k) {
    const std::size_t pos = L - real + k;
    const Event& e = seq.events[first + k];
    ex.input_items[pos] = e.item;
    ex.input_rows[pos] = ds.vocab.row_of(e.item);
    ex.padding_mask[pos] = false;
    std::copy(e.attributes.begin(), e.attributes.end(), ex.input_attributes.row(pos).begin());
    std::copy(e.context.begin(), e.context.end(), ex.input_contexts.row(pos).begin());
    for (std::size_t j = 0; j < 3; ++j) ex.input_calendar(pos, j) = e.calendar[j];
  }
}

inline void fill_candidates(const Dataset& ds, const Event& target, const std::vector<std::uint32_t>& negatives,
                            CandidateSet& out) {
  const std::size_t n = negatives.size() + 1;
  const std::size_t a = ds.attribute_dim;
  const std::size_t c = ds.context_dim;
  out.items.clear();
  out.items.reserve(n);
  out.items.push_back(target.item);
  out.items.insert(out.items.end(), negatives.begin(), negatives.end());
  out.rows.resize(n);
  out.attributes = Tensor({n, a});
  out.contexts = Tensor({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    out.rows[i] = ds.vocab.row_of(out.items[i]);
    if (i == 0) {
      std::copy(target.attributes.begin(), target.attributes.end(), out.attributes.row(0).begin());
    } else {
      const auto attrs = ds.attributes_of(out.items[i]);
      std::copy(attrs.begin(), attrs.end(), out.attributes.row(i).begin());
    }
    std::copy(target.context.begin(), target.context.end(), out.contexts.row(i).begin());
  }
}

inline std::size_t pool_size(const Dataset& ds, const UserSequence& seq) {
  return ds.item_count() - seq.item_set.size();
}

// Uniform with replacement over items outside the user's history.
inline std::vector<std::uint32_t> sample_with_replacement(const Dataset& ds, const UserSequence& seq, std::size_t n,
                                                          std::mt19937_64& rng) {
  if (n > 0 && pool_size(ds, seq) == 0) {
    throw DataError("user " + ds.user_keys[seq.user_index] + " has interacted with every item; no negatives");
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(ds.item_count() - 1));
  std::vector<std::uint32_t> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::uint32_t item = pick(rng);
    if (!seq.contains(item)) out.push_back(item);
  }
  return out;
}

// Distinct negatives; the whole pool when it is smaller than n.
inline std::vector<std::uint32_t> sample_without_replacement(const Dataset& ds, const UserSequence& seq,
                                                             std::size_t n, std::mt19937_64& rng) {
  const std::size_t pool = pool_size(ds, seq);
  if (2 * n >= pool) {
    std::vector<std::uint32_t> all;
    all.reserve(pool);
    for (std::uint32_t i = 0; i < ds.item_count(); ++i)
      if (!seq.contains(i)) all.push_back(i);
    if (n >= all.size()) return all;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(n);
    return all;
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(ds.item_count() - 1));
  std::unordered_set<std::uint32_t> seen;
  std::vector<std::uint32_t> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::uint32_t item = pick(rng);
    if (!seq.contains(item) && seen.insert(item).second) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Number of distinct end positions a training draw can pick.
inline std::size_t training_positions(const UserSequence& seq) {
  return seq.training_length() >= 2 ? seq.training_length() - 1 : 0;
}

// Returns nullopt when the training region holds fewer than two events.
inline std::optional<FixedLengthExample> make_training_example(const Dataset& ds, const UserSequence& seq,
                                                               std::size_t L, std::size_t negatives,
                                                               std::mt19937_64& rng) {
  const std::size_t region = seq.training_length();
  if (region < 2) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick_end(1, region - 1);
  const std::size_t end = pick_end(rng);
  FixedLengthExample ex;
  detail::fill_inputs(ds, seq, end, L, ex);
  detail::fill_candidates(ds, seq.events[end], detail::sample_with_replacement(ds, seq, negatives, rng),
                          ex.candidates);
  return ex;
}

// Returns nullopt for users excluded from evaluation.
inline std::optional<FixedLengthExample> make_eval_example(const Dataset& ds, const UserSequence& seq, std::size_t L,
                                                           EvalMode mode, NegativeProtocol protocol,
                                                           std::mt19937_64& rng) {
  if (!seq.evaluable()) return std::nullopt;
  const std::size_t target = mode == EvalMode::test ? seq.test_index : seq.valid_index;
  FixedLengthExample ex;
  detail::fill_inputs(ds, seq, target, L, ex);
  std::vector<std::uint32_t> negatives;
  if (protocol.kind == NegativeProtocol::Kind::all_items) {
    negatives.reserve(detail::pool_size(ds, seq));
    for (std::uint32_t i = 0; i < ds.item_count(); ++i)
      if (!seq.contains(i)) negatives.push_back(i);
  } else {
    negatives = detail::sample_without_replacement(ds, seq, protocol.count, rng);
  }
  detail::fill_candidates(ds, seq.events[target], negatives, ex.candidates);
  return ex;
}

}  // namespace convrec::data
