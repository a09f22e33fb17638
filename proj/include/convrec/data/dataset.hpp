#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "convrec/data/calendar.hpp"
#include "convrec/error.hpp"
#include "convrec/log.hpp"

namespace convrec::data {

// One raw line of the interaction log.
struct InteractionRecord {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
  std::optional<std::vector<double>> attributes;
  std::size_t line = 0;
};

enum class ContextComponents {
  ymd,    // year, month, day
  ymdhw,  // year, month, day, hour, weekday
};

inline std::size_t context_width(ContextComponents c) { return c == ContextComponents::ymd ? 3 : 5; }

inline std::vector<double> raw_context(const CalendarDate& date, ContextComponents c) {
  std::vector<double> v{static_cast<double>(date.year), static_cast<double>(date.month),
                        static_cast<double>(date.day)};
  if (c == ContextComponents::ymdhw) {
    v.push_back(static_cast<double>(date.hour));
    v.push_back(static_cast<double>(date.weekday));
  }
  return v;
}

struct Event {
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;
  std::array<int, 3> calendar{};   // raw (year, month, day), used for intervals
  std::vector<double> attributes;
  std::vector<double> context;     // standardised calendar components
};

struct SplitPoint {
  std::size_t valid;
  std::size_t test;
};

struct UserSequence {
  std::uint32_t user_index = 0;
  std::vector<Event> events;
  std::vector<std::uint32_t> item_set;  // sorted, unique
  std::size_t valid_index = 0;
  std::size_t test_index = 0;

  std::size_t size() const { return events.size(); }
  bool evaluable() const { return events.size() >= 3 && valid_index < test_index && test_index < events.size(); }
  // Events [0, training_length()) are available to the trainer.
  std::size_t training_length() const { return valid_index; }
  bool contains(std::uint32_t item) const { return std::binary_search(item_set.begin(), item_set.end(), item); }
};

// Dense item indexing plus the frequent-item row assignment of the ID lookup
// table: the top-F items by frequency get rows 1..F, everything else shares
// row 0, and row F+1 is reserved for padding.
struct ItemVocabulary {
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::size_t> frequency;
  std::vector<std::size_t> embedded_row;
  std::size_t frequent_count = 0;

  std::size_t size() const { return keys.size(); }
  std::size_t generic_row() const { return 0; }
  std::size_t pad_row() const { return frequent_count + 1; }
  std::size_t table_rows() const { return frequent_count + 2; }
  std::size_t row_of(std::uint32_t item) const { return embedded_row.at(item); }
};

inline ItemVocabulary build_item_vocab(std::span<const UserSequence> sequences, std::vector<std::string> item_keys,
                                       std::size_t frequent_items) {
  ItemVocabulary vocab;
  vocab.keys = std::move(item_keys);
  for (std::uint32_t i = 0; i < vocab.keys.size(); ++i) vocab.index.emplace(vocab.keys[i], i);
  vocab.frequency.assign(vocab.keys.size(), 0);
  for (const auto& seq : sequences)
    for (const auto& e : seq.events) ++vocab.frequency.at(e.item);

  std::vector<std::uint32_t> order(vocab.keys.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (vocab.frequency[a] != vocab.frequency[b]) return vocab.frequency[a] > vocab.frequency[b];
    return vocab.keys[a] < vocab.keys[b];
  });
  vocab.frequent_count = std::min(frequent_items, vocab.keys.size());
  vocab.embedded_row.assign(vocab.keys.size(), 0);
  for (std::size_t r = 0; r < vocab.frequent_count; ++r) vocab.embedded_row[order[r]] = r + 1;
  return vocab;
}

// Per-component z-scoring fitted on training-region events.
struct ContextStandardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::vector<double> apply(std::span<const double> raw) const {
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean[i]) / stddev[i];
    return out;
  }
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;  // distinct interacted items
  std::size_t catalog_items = 0;
  std::size_t interactions = 0;
  double average_length = 0.0;
  std::size_t evaluable_users = 0;
};

struct Dataset {
  std::vector<std::string> user_keys;
  std::vector<UserSequence> users;
  ItemVocabulary vocab;
  ContextComponents components = ContextComponents::ymd;
  std::size_t attribute_dim = 0;
  std::size_t context_dim = 3;
  std::vector<double> item_attributes;  // item_count x attribute_dim
  ContextStandardizer standardizer;
  DatasetStats stats;

  std::size_t item_count() const { return vocab.size(); }
  std::span<const double> attributes_of(std::uint32_t item) const {
    return {item_attributes.data() + static_cast<std::size_t>(item) * attribute_dim, attribute_dim};
  }
};

struct BuildOptions {
  std::size_t frequent_items = 5000;
  ContextComponents components = ContextComponents::ymd;
};

using ItemAttributeTable = std::unordered_map<std::string, std::vector<double>>;
using SplitManifest = std::map<std::string, SplitPoint>;

namespace detail {

inline std::vector<double> parse_attrs(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw DataError(where + ": attrs must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(where + ": attrs must be an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::string key_string(const nlohmann::json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) throw DataError(where + ": missing field '" + field + "'");
  const auto& v = j.at(field);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw DataError(where + ": field '" + field + "' must be a string or integer");
}

}  // namespace detail

// JSON-lines {user, item, ts, attrs?}. Blank lines are skipped; anything
// else that fails to parse is reported with its 1-based line number.
inline std::vector<InteractionRecord> read_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file: " + path.string());
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed record at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw DataError("malformed record at line " + std::to_string(line_no) + ": not an object");
    InteractionRecord r;
    r.line = line_no;
    r.user = detail::key_string(j, "user", where);
    r.item = detail::key_string(j, "item", where);
    if (!j.contains("ts") || !j["ts"].is_number_integer()) {
      throw DataError("malformed record at line " + std::to_string(line_no) + ": 'ts' must be an integer");
    }
    r.timestamp = j["ts"].get<std::int64_t>();
    if (r.timestamp < 0) throw DataError("malformed record at line " + std::to_string(line_no) + ": negative ts");
    if (j.contains("attrs")) r.attributes = detail::parse_attrs(j["attrs"], where);
    records.push_back(std::move(r));
  }
  return records;
}

inline ItemAttributeTable read_item_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open item attribute file: " + path.string());
  ItemAttributeTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed item attribute line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("attrs")) {
      throw DataError("malformed item attribute line " + std::to_string(line_no));
    }
    table[detail::key_string(j, "item", where)] = detail::parse_attrs(j["attrs"], where);
  }
  return table;
}

// {"<user>": {"valid": i, "test": j}, ...}
inline SplitManifest read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed split manifest: ") + e.what());
  }
  SplitManifest manifest;
  for (const auto& [user, v] : j.items()) {
    if (!v.contains("valid") || !v.contains("test")) {
      throw DataError("split manifest entry for user '" + user + "' needs 'valid' and 'test'");
    }
    manifest[user] = SplitPoint{v["valid"].get<std::size_t>(), v["test"].get<std::size_t>()};
  }
  return manifest;
}

// Groups records per user, orders each history by time (stable on input
// order), assigns dense ids, splits, and fits the context standardiser.
inline Dataset build_dataset(std::vector<InteractionRecord> records, const BuildOptions& options,
                             const ItemAttributeTable* item_table = nullptr,
                             const SplitManifest* manifest = nullptr) {
  Dataset ds;
  ds.components = options.components;
  ds.context_dim = context_width(options.components);

  std::optional<std::size_t> width;
  auto check_width = [&](std::size_t w, const std::string& where) {
    if (!width) width = w;
    if (*width != w) {
      throw DataError("schema error: attribute width " + std::to_string(w) + " at " + where + " differs from " +
                      std::to_string(*width));
    }
  };
  if (item_table) {
    for (const auto& [item, attrs] : *item_table) check_width(attrs.size(), "item '" + item + "'");
  }
  for (const auto& r : records) {
    if (r.attributes) {
      check_width(r.attributes->size(), "line " + std::to_string(r.line));
    } else if (!item_table) {
      throw DataError("schema error: record at line " + std::to_string(r.line) +
                      " has no attrs and no item attribute file was given");
    }
  }
  ds.attribute_dim = width.value_or(0);

  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;
  std::vector<std::string> item_keys;
  std::vector<std::vector<std::size_t>> per_user;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto [uit, new_user] = user_index.emplace(r.user, static_cast<std::uint32_t>(ds.user_keys.size()));
    if (new_user) {
      ds.user_keys.push_back(r.user);
      per_user.emplace_back();
    }
    per_user[uit->second].push_back(i);
    auto [iit, new_item] = item_index.emplace(r.item, static_cast<std::uint32_t>(item_keys.size()));
    if (new_item) {
      item_keys.push_back(r.item);
      if (item_table) {
        auto found = item_table->find(r.item);
        if (found == item_table->end() && !r.attributes) {
          throw DataError("item '" + r.item + "' (line " + std::to_string(r.line) + ") has no attributes");
        }
        const auto& attrs = found != item_table->end() ? found->second : *r.attributes;
        ds.item_attributes.insert(ds.item_attributes.end(), attrs.begin(), attrs.end());
      } else {
        ds.item_attributes.insert(ds.item_attributes.end(), r.attributes->begin(), r.attributes->end());
      }
    }
  }

  // Catalog items that nobody interacted with still count as candidates.
  if (item_table) {
    std::vector<std::string> unseen;
    for (const auto& [item, attrs] : *item_table)
      if (!item_index.contains(item)) unseen.push_back(item);
    std::sort(unseen.begin(), unseen.end());
    for (auto& item : unseen) {
      item_index.emplace(item, static_cast<std::uint32_t>(item_keys.size()));
      const auto& attrs = item_table->at(item);
      ds.item_attributes.insert(ds.item_attributes.end(), attrs.begin(), attrs.end());
      item_keys.push_back(std::move(item));
    }
  }

  ds.users.resize(per_user.size());
  for (std::uint32_t u = 0; u < per_user.size(); ++u) {
    auto& idx = per_user[u];
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
    UserSequence& seq = ds.users[u];
    seq.user_index = u;
    seq.events.reserve(idx.size());
    for (std::size_t i : idx) {
      const auto& r = records[i];
      Event e;
      e.item = item_index.at(r.item);
      e.timestamp = r.timestamp;
      e.calendar = decompose_timestamp(r.timestamp).ymd();
      if (r.attributes) {
        e.attributes = *r.attributes;
      } else {
        const auto attrs = ds.attributes_of(e.item);
        e.attributes.assign(attrs.begin(), attrs.end());
      }
      seq.item_set.push_back(e.item);
      seq.events.push_back(std::move(e));
    }
    std::sort(seq.item_set.begin(), seq.item_set.end());
    seq.item_set.erase(std::unique(seq.item_set.begin(), seq.item_set.end()), seq.item_set.end());

    const std::size_t n = seq.events.size();
    if (n >= 3) {
      seq.valid_index = n - 2;
      seq.test_index = n - 1;
    } else {
      seq.valid_index = n;
      seq.test_index = n;
    }
    if (manifest) {
      auto it = manifest->find(ds.user_keys[u]);
      if (it != manifest->end()) {
        if (!(it->second.valid < it->second.test && it->second.test < n) || it->second.valid == 0) {
          throw DataError("split manifest indices for user '" + ds.user_keys[u] + "' are out of range");
        }
        seq.valid_index = it->second.valid;
        seq.test_index = it->second.test;
      }
    }
  }

  ds.vocab = build_item_vocab(ds.users, std::move(item_keys), options.frequent_items);

  // Standardisation statistics come from training-region events only.
  const std::size_t c = ds.context_dim;
  std::vector<double> sum(c, 0.0), sum_sq(c, 0.0);
  std::size_t count = 0;
  for (const auto& seq : ds.users) {
    for (std::size_t i = 0; i < seq.training_length(); ++i) {
      const auto raw = raw_context(decompose_timestamp(seq.events[i].timestamp), ds.components);
      for (std::size_t k = 0; k < c; ++k) {
        sum[k] += raw[k];
        sum_sq[k] += raw[k] * raw[k];
      }
      ++count;
    }
  }
  ds.standardizer.mean.assign(c, 0.0);
  ds.standardizer.stddev.assign(c, 1.0);
  if (count > 0) {
    for (std::size_t k = 0; k < c; ++k) {
      const double m = sum[k] / static_cast<double>(count);
      const double var = std::max(0.0, sum_sq[k] / static_cast<double>(count) - m * m);
      ds.standardizer.mean[k] = m;
      ds.standardizer.stddev[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
  }
  for (auto& seq : ds.users) {
    for (auto& e : seq.events) {
      e.context = ds.standardizer.apply(raw_context(decompose_timestamp(e.timestamp), ds.components));
    }
  }

  ds.stats.users = ds.users.size();
  ds.stats.items = static_cast<std::size_t>(
      std::count_if(ds.vocab.frequency.begin(), ds.vocab.frequency.end(), [](std::size_t f) { return f > 0; }));
  ds.stats.catalog_items = ds.vocab.size();
  ds.stats.interactions = records.size();
  ds.stats.average_length =
      ds.users.empty() ? 0.0 : static_cast<double>(records.size()) / static_cast<double>(ds.users.size());
  ds.stats.evaluable_users = static_cast<std::size_t>(
      std::count_if(ds.users.begin(), ds.users.end(), [](const UserSequence& s) { return s.evaluable(); }));
  return ds;
}

struct DatasetOptions {
  std::filesystem::path interactions;
  std::optional<std::filesystem::path> item_attributes;
  std::optional<std::filesystem::path> split_manifest;
  BuildOptions build;
};

inline Dataset load_dataset(const DatasetOptions& options) {
  auto records = read_interactions(options.interactions);
  std::optional<ItemAttributeTable> table;
  if (options.item_attributes) table = read_item_attributes(*options.item_attributes);
  std::optional<SplitManifest> manifest;
  if (options.split_manifest) manifest = read_split_manifest(*options.split_manifest);
  Dataset ds = build_dataset(std::move(records), options.build, table ? &*table : nullptr,
                             manifest ? &*manifest : nullptr);
  log_info("loaded ", options.interactions.string(), ": ", ds.stats.users, " users, ", ds.stats.items, " items, ",
           ds.stats.interactions, " interactions, avg length ", ds.stats.average_length, ", ",
           ds.stats.evaluable_users, " evaluable users");
  return ds;
}

}  // namespace convrec::data
