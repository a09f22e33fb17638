#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "convrec/data/calendar.hpp"
#include "convrec/data/dataset.hpp"

// Small generated datasets with known structure, used by the samples and the
// test suite.
namespace convrec::data::synthetic {

inline constexpr std::int64_t kDay = 86400;
inline constexpr std::int64_t kBaseTimestamp = 1'577'836'800;  // 2020-01-01

inline std::vector<double> random_attributes(std::size_t width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(width);
  for (auto& x : v) x = dist(rng);
  return v;
}

struct RingOptions {
  std::size_t users = 20;
  std::size_t items = 50;
  std::size_t length = 12;
  std::size_t start_stride = 5;
  std::size_t attribute_dim = 8;
  std::uint64_t seed = 1;
};

// User u walks the item ring from (stride * u) mod items, one step per day.
inline std::vector<InteractionRecord> ring_sequences(const RingOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<std::vector<double>> attrs;
  for (std::size_t i = 0; i < o.items; ++i) attrs.push_back(random_attributes(o.attribute_dim, rng));
  std::vector<InteractionRecord> records;
  for (std::size_t u = 0; u < o.users; ++u) {
    const std::size_t start = (o.start_stride * u) % o.items;
    for (std::size_t t = 0; t < o.length; ++t) {
      const std::size_t item = (start + t) % o.items;
      InteractionRecord r;
      r.user = "u" + std::to_string(u);
      r.item = "i" + std::to_string(item);
      r.timestamp = kBaseTimestamp + static_cast<std::int64_t>(t) * kDay;
      r.attributes = attrs[item];
      records.push_back(std::move(r));
    }
  }
  return records;
}

struct IntervalSignalOptions {
  std::size_t users = 300;
  std::size_t gaps = 20;      // target items t_1..t_G
  std::size_t fillers = 200;  // uninformative items
  std::size_t length = 8;
  double clean_probability = 0.8;
  std::size_t attribute_dim = 8;
  std::uint64_t seed = 1;
};

inline std::string interval_target_key(std::size_t gap) { return "t" + std::to_string(gap); }

// The item of event i+1 is t_g when events i-1 and i fall in the same month
// g days apart (1 <= g <= G), and a random filler otherwise. Users are
// redrawn until both held-out targets follow the rule, so the validation and
// test items are a function of the last input interval alone.
inline std::vector<InteractionRecord> interval_signal_sequences(const IntervalSignalOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<std::string> keys;
  std::vector<std::vector<double>> attrs;
  for (std::size_t g = 1; g <= o.gaps; ++g) {
    keys.push_back(interval_target_key(g));
    attrs.push_back(random_attributes(o.attribute_dim, rng));
  }
  for (std::size_t f = 0; f < o.fillers; ++f) {
    keys.push_back("f" + std::to_string(f));
    attrs.push_back(random_attributes(o.attribute_dim, rng));
  }
  std::uniform_int_distribution<std::size_t> pick_filler(o.gaps, o.gaps + o.fillers - 1);
  std::uniform_int_distribution<std::int64_t> pick_clean(1, static_cast<std::int64_t>(o.gaps));
  std::uniform_int_distribution<std::int64_t> pick_long(static_cast<std::int64_t>(o.gaps) + 1, 45);
  std::uniform_int_distribution<std::int64_t> pick_start(0, 700);
  std::bernoulli_distribution clean(o.clean_probability);

  std::vector<InteractionRecord> records;
  for (std::size_t u = 0; u < o.users; ++u) {
    std::vector<std::int64_t> ts;
    std::vector<std::size_t> items;
    std::vector<bool> rule;
    do {
      ts.assign(1, kBaseTimestamp + pick_start(rng) * kDay);
      for (std::size_t i = 1; i < o.length; ++i) ts.push_back(ts.back() + (clean(rng) ? pick_clean(rng) : pick_long(rng)) * kDay);
      items.clear();
      rule.clear();
      for (std::size_t i = 0; i < o.length; ++i) {
        std::size_t item = pick_filler(rng);
        bool follows = false;
        if (i >= 2) {
          const auto a = decompose_timestamp(ts[i - 2]);
          const auto b = decompose_timestamp(ts[i - 1]);
          const auto gap = static_cast<std::int64_t>(b.day) - static_cast<std::int64_t>(a.day);
          if (a.year == b.year && a.month == b.month && gap >= 1 && gap <= static_cast<std::int64_t>(o.gaps)) {
            item = static_cast<std::size_t>(gap - 1);
            follows = true;
          }
        }
        items.push_back(item);
        rule.push_back(follows);
      }
    } while (!(rule[o.length - 1] && rule[o.length - 2]));
    for (std::size_t i = 0; i < o.length; ++i) {
      InteractionRecord r;
      r.user = "u" + std::to_string(u);
      r.item = keys[items[i]];
      r.timestamp = ts[i];
      r.attributes = attrs[items[i]];
      records.push_back(std::move(r));
    }
  }
  return records;
}

// Every catalog item with its attributes, so items nobody touched remain
// candidates.
inline ItemAttributeTable interval_signal_catalog(const IntervalSignalOptions& o) {
  std::mt19937_64 rng(o.seed);
  ItemAttributeTable table;
  for (std::size_t g = 1; g <= o.gaps; ++g) table[interval_target_key(g)] = random_attributes(o.attribute_dim, rng);
  for (std::size_t f = 0; f < o.fillers; ++f) table["f" + std::to_string(f)] = random_attributes(o.attribute_dim, rng);
  return table;
}

}  // namespace convrec::data::synthetic
