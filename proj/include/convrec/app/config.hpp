#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "convrec/bench/scaling.hpp"
#include "convrec/data/dataset.hpp"
#include "convrec/error.hpp"
#include "convrec/eval/evaluator.hpp"
#include "convrec/model/convrec.hpp"
#include "convrec/train/trainer.hpp"

namespace convrec::app {

// Everything a run needs. Serializes to a flat `key = value` text file whose
// replay reproduces the run.
struct RunConfig {
  std::string interactions;
  std::string item_attributes;
  std::string split_manifest;
  std::size_t frequent_items = 5000;
  data::ContextComponents context = data::ContextComponents::ymd;

  model::ModelConfig model;
  train::TrainConfig train;

  data::NegativeProtocol protocol = data::NegativeProtocol::sampled(100);
  std::size_t k = 10;
  std::string groups;

  bench::ScalingOptions bench;

  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out = "runs/latest";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline nlohmann::json parse_json(const std::string& key, const std::string& v) {
  try {
    return nlohmann::json::parse(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a list");
  }
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

// Accepts `[[2,2],[5,5]]` and the brace notation `{ (2, 2), (5, 5) }`.
inline std::vector<model::LayerSpec> parse_schedule(const std::string& key, const std::string& text) {
  std::string s = text;
  for (char& c : s) {
    if (c == '{' || c == '(') c = '[';
    if (c == '}' || c == ')') c = ']';
  }
  const auto j = detail::parse_json(key, s);
  std::vector<model::LayerSpec> out;
  auto bad = [&] { return ConfigError("config key '" + key + "': expected [[kernel, stride], ...], got '" + text + "'"); };
  if (!j.is_array() || j.empty()) throw bad();
  for (const auto& layer : j) {
    if (!layer.is_array() || layer.size() != 2 || !layer[0].is_number_unsigned() || !layer[1].is_number_unsigned()) {
      throw bad();
    }
    out.push_back({layer[0].get<std::size_t>(), layer[1].get<std::size_t>()});
  }
  return out;
}

inline std::string schedule_text(const std::vector<model::LayerSpec>& layers) {
  std::string s = "[";
  for (std::size_t j = 0; j < layers.size(); ++j) {
    if (j) s += ", ";
    s += "[" + std::to_string(layers[j].kernel) + ", " + std::to_string(layers[j].stride) + "]";
  }
  return s + "]";
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  const auto j = detail::parse_json(key, text);
  if (!j.is_array() || j.empty()) throw ConfigError("config key '" + key + "': expected a non-empty list");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) throw ConfigError("config key '" + key + "': list entries must be integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

inline std::string size_list_text(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline std::vector<Field> fields(RunConfig& c) {
  using namespace detail;
  auto size_field = [](const std::string& key, std::size_t& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = parse_size(key, v); },
                 [&ref] { return std::to_string(ref); }};
  };
  auto double_field = [](const std::string& key, double& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = parse_double(key, v); },
                 [&ref] { return format_double(ref); }};
  };
  auto bool_field = [](const std::string& key, bool& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = parse_bool(key, v); },
                 [&ref] { return std::string(ref ? "true" : "false"); }};
  };
  auto string_field = [](const std::string& key, std::string& ref) {
    return Field{key, [&ref](const std::string& v) { ref = unquote(v); }, [&ref] { return ref; }};
  };
  auto& d = c.model.dims;
  std::vector<Field> f{
      string_field("interactions", c.interactions),
      string_field("item_attributes", c.item_attributes),
      string_field("split_manifest", c.split_manifest),
      size_field("frequent_items", c.frequent_items),
      {"context",
       [&c](const std::string& v) {
         if (v == "ymd") {
           c.context = data::ContextComponents::ymd;
         } else if (v == "ymdhw") {
           c.context = data::ContextComponents::ymdhw;
         } else {
           throw ConfigError("config key 'context': expected ymd or ymdhw, got '" + v + "'");
         }
       },
       [&c] { return std::string(c.context == data::ContextComponents::ymd ? "ymd" : "ymdhw"); }},
      {"embedding",
       [&d](const std::string& v) {
         const std::size_t e = parse_size("embedding", v);
         d.d_a = d.d_c = d.d_f = d.d_i = d.d_v = e;
       },
       nullptr},
      size_field("d_a", d.d_a),
      size_field("d_c", d.d_c),
      size_field("d_f", d.d_f),
      size_field("d_i", d.d_i),
      size_field("d_v", d.d_v),
      size_field("sequence_length", c.model.sequence_length),
      {"schedule", [&c](const std::string& v) { c.model.schedule = parse_schedule("schedule", v); },
       [&c] { return schedule_text(c.model.schedule); }},
      double_field("dropout", c.model.dropout_rate),
      bool_field("no_intervals", c.model.ablation.no_intervals),
      bool_field("no_residuals", c.model.ablation.no_residuals),
      bool_field("single_conv", c.model.ablation.single_conv),
      bool_field("avgpool_only", c.model.ablation.avgpool_only),
      size_field("batch_size", c.train.batch_size),
      double_field("learning_rate", c.train.learning_rate),
      double_field("weight_decay", c.train.weight_decay),
      size_field("max_epochs", c.train.max_epochs),
      size_field("patience", c.train.patience),
      size_field("negatives", c.train.negatives),
      size_field("validation_negatives", c.train.validation_negatives),
      size_field("validate_every", c.train.validate_every),
      {"protocol", [&c](const std::string& v) { c.protocol = eval::parse_protocol(unquote(v)); },
       [&c] { return eval::protocol_string(c.protocol); }},
      size_field("k", c.k),
      string_field("groups", c.groups),
      {"bench_lengths", [&c](const std::string& v) { c.bench.lengths = parse_size_list("bench_lengths", v); },
       [&c] { return size_list_text(c.bench.lengths); }},
      size_field("bench_batch_size", c.bench.batch_size),
      size_field("bench_d_v", c.bench.d_v),
      size_field("bench_heads", c.bench.heads),
      size_field("bench_warmup", c.bench.warmup),
      size_field("bench_repetitions", c.bench.repetitions),
      {"seed", [&c](const std::string& v) { c.seed = parse_u64("seed", v); },
       [&c] { return std::to_string(c.seed); }},
      size_field("threads", c.threads),
      string_field("out", c.out),
  };
  return f;
}

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& f : fields(c)) {
    if (f.key == key) {
      f.set(detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// `key=value` as given on the command line.
inline void apply_assignment(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    apply_setting(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(c, buffer.str(), path.string());
}

// Resolved form: every key with its effective value.
inline std::string config_text(const RunConfig& config) {
  RunConfig c = config;
  std::string out;
  for (auto& f : fields(c))
    if (f.get) out += f.key + " = " + f.get() + "\n";
  return out;
}

inline void validate(const RunConfig& c) {
  c.model.validate();
  c.train.validate();
  if (c.k == 0) throw ConfigError("config key 'k' must be at least 1");
  if (c.threads == 0) throw ConfigError("config key 'threads' must be at least 1");
  if (c.frequent_items == 0) throw ConfigError("config key 'frequent_items' must be at least 1");
}

}  // namespace convrec::app
