#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "convrec/app/config.hpp"
#include "convrec/bench/scaling.hpp"
#include "convrec/data/dataset.hpp"
#include "convrec/error.hpp"
#include "convrec/eval/evaluator.hpp"
#include "convrec/log.hpp"
#include "convrec/model/convrec.hpp"
#include "convrec/numerics/checkpoint.hpp"
#include "convrec/train/trainer.hpp"

namespace convrec::app {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFile = "model.cvrc";

// Files written under one output directory, listed in manifest.json.
class Artifacts {
 public:
  Artifacts(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  const fs::path& dir() const { return dir_; }

  fs::path path(const std::string& name) const { return dir_ / name; }

  std::ofstream open(const std::string& name) {
    std::ofstream out(path(name), std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path(name).string() + "'");
    record(name);
    return out;
  }

  void record(const std::string& name) {
    for (const auto& f : files_)
      if (f == name) return;
    files_.push_back(name);
  }

  void write_manifest(std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["seed"] = seed;
    j["files"] = files_;
    std::ofstream out(path("manifest.json"), std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in '" + dir_.string() + "'");
    out << j.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> files_;
};

inline std::string fmt(double v) { return detail::format_double(v); }

inline data::Dataset load_data(const RunConfig& c) {
  if (c.interactions.empty()) {
    throw ConfigError("no dataset given: pass --data <interactions.jsonl> or set 'interactions' in the config");
  }
  data::DatasetOptions o;
  o.interactions = c.interactions;
  if (!c.item_attributes.empty()) o.item_attributes = fs::path(c.item_attributes);
  if (!c.split_manifest.empty()) o.split_manifest = fs::path(c.split_manifest);
  o.build.frequent_items = c.frequent_items;
  o.build.components = c.context;
  return data::load_dataset(o);
}

inline model::ModelConfig model_config_for(const RunConfig& c, const data::Dataset& ds) {
  model::ModelConfig mc = c.model;
  mc.dims.attribute_dim = ds.attribute_dim;
  mc.dims.context_dim = ds.context_dim;
  mc.dims.id_rows = ds.vocab.table_rows();
  return mc;
}

inline std::uint64_t model_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

inline train::TrainConfig train_config_for(const RunConfig& c) {
  train::TrainConfig t = c.train;
  t.seed = c.seed;
  t.eval_threads = c.threads;
  return t;
}

inline eval::EvalOptions eval_options_for(const RunConfig& c, std::size_t sequence_length) {
  eval::EvalOptions o;
  o.mode = data::EvalMode::test;
  o.protocol = c.protocol;
  o.k = c.k;
  o.seed = c.seed;
  o.sequence_length = sequence_length;
  o.threads = c.threads;
  return o;
}

inline std::string hr_column(std::size_t k) { return "HR@" + std::to_string(k); }
inline std::string ndcg_column(std::size_t k) { return "NDCG@" + std::to_string(k); }

inline void write_metrics(Artifacts& a, const eval::MetricReport& r, const std::vector<eval::GroupReport>& groups = {}) {
  auto out = a.open("metrics.csv");
  out << "group,protocol,k," << hr_column(r.k) << "," << ndcg_column(r.k) << ",evaluated_users,excluded_users\n";
  out << "all," << r.protocol << "," << r.k << "," << fmt(r.hr_at_k) << "," << fmt(r.ndcg_at_k) << ","
      << r.evaluated_users << "," << r.excluded_users << "\n";
  for (const auto& g : groups) {
    if (!g.report) {
      out << g.name << "," << r.protocol << "," << r.k << ",,,0,0\n";
      continue;
    }
    out << g.name << "," << g.report->protocol << "," << g.report->k << "," << fmt(g.report->hr_at_k) << ","
        << fmt(g.report->ndcg_at_k) << "," << g.report->evaluated_users << "," << g.report->excluded_users << "\n";
  }
}

inline void write_ranks(Artifacts& a, const eval::MetricReport& r, const data::Dataset& ds) {
  auto out = a.open("ranks.jsonl");
  for (const auto& rank : r.ranks) {
    nlohmann::ordered_json j;
    j["user"] = ds.user_keys[rank.user];
    j["rank"] = rank.rank;
    j["candidates"] = rank.candidate_count;
    out << j.dump() << "\n";
  }
}

inline void write_resolved_config(Artifacts& a, const RunConfig& c) { a.open("resolved.cfg") << config_text(c); }

// "top_bottom:0.2" -> 0.2; empty -> no grouping.
inline std::optional<double> parse_groups(const std::string& spec) {
  if (spec.empty() || spec == "none") return std::nullopt;
  const std::string prefix = "top_bottom:";
  if (spec.rfind(prefix, 0) != 0) throw ConfigError("groups must look like top_bottom:<fraction>, got '" + spec + "'");
  const double q = detail::parse_double("groups", spec.substr(prefix.size()));
  if (!(q > 0.0) || q > 1.0) throw ConfigError("groups fraction must lie in (0, 1], got '" + spec + "'");
  return q;
}

struct TrainOutcome {
  train::FitResult fit;
  eval::MetricReport test;
  fs::path checkpoint;
};

// Fits a fresh model, keeps the best-validation weights, reports test metrics.
inline TrainOutcome train_and_test(const RunConfig& c, const data::Dataset& ds,
                                   const std::function<void(const train::EpochLog&)>& on_epoch = {}) {
  validate(c);
  model::ConvRecModel m(model_config_for(c, ds), model_seed(c.seed));
  TrainOutcome out;
  out.fit = train::fit(m, ds, train_config_for(c), on_epoch);
  out.test = eval::evaluate(m, ds, eval_options_for(c, m.config().sequence_length));
  return out;
}

inline TrainOutcome cmd_train(const RunConfig& c) {
  validate(c);
  const data::Dataset ds = load_data(c);
  Artifacts a(c.out, "train");
  write_resolved_config(a, c);
  auto log = a.open("train_log.csv");
  log << "epoch,mean_loss,val_hr10,val_ndcg10,seconds,peak_bytes\n";
  model::ConvRecModel m(model_config_for(c, ds), model_seed(c.seed));
  log_info("model: ", m.parameter_count(), " parameters, schedule ",
           m.config().ablation.avgpool_only ? "avgpool" : model::schedule_string(m.config().effective_schedule()));
  TrainOutcome out;
  out.fit = train::fit(m, ds, train_config_for(c), [&](const train::EpochLog& e) {
    log << e.epoch << "," << fmt(e.mean_loss) << "," << fmt(e.val_hr10) << "," << fmt(e.val_ndcg10) << ","
        << fmt(e.seconds) << "," << e.peak_bytes << "\n";
    log.flush();
    log_info("epoch ", e.epoch, ": loss ", e.mean_loss, ", val HR@10 ", e.val_hr10, ", val NDCG@10 ", e.val_ndcg10);
  });
  out.checkpoint = a.path(kCheckpointFile);
  numerics::save_checkpoint(out.checkpoint, m.state());
  a.record(kCheckpointFile);
  out.test = eval::evaluate(m, ds, eval_options_for(c, m.config().sequence_length));
  write_metrics(a, out.test);
  log_info("test ", out.test.protocol, ": ", hr_column(c.k), " ", out.test.hr_at_k, ", ", ndcg_column(c.k), " ",
           out.test.ndcg_at_k);
  a.write_manifest(c.seed);
  return out;
}

// Rebuilds the model a checkpoint describes and loads its weights.
inline model::ConvRecModel load_model(const fs::path& checkpoint) {
  const auto records = numerics::load_checkpoint(checkpoint);
  model::ConvRecModel m(model::config_from_state(records), 0);
  m.load_state(records);
  return m;
}

inline void check_compatible(const model::ConvRecModel& m, const data::Dataset& ds) {
  const auto& d = m.config().dims;
  auto mismatch = [](const std::string& what, std::size_t model, std::size_t data) {
    return CheckpointMismatch("checkpoint was trained with " + std::to_string(model) + " " + what + " but the dataset has " +
                              std::to_string(data));
  };
  if (d.attribute_dim != ds.attribute_dim) throw mismatch("attribute columns", d.attribute_dim, ds.attribute_dim);
  if (d.context_dim != ds.context_dim) throw mismatch("context columns", d.context_dim, ds.context_dim);
  if (d.id_rows != ds.vocab.table_rows()) throw mismatch("id-table rows", d.id_rows, ds.vocab.table_rows());
}

struct EvaluateOutcome {
  eval::MetricReport report;
  std::vector<eval::GroupReport> groups;
};

inline EvaluateOutcome evaluate_checkpoint(const RunConfig& c, const fs::path& checkpoint, const data::Dataset& ds) {
  const model::ConvRecModel m = load_model(checkpoint);
  check_compatible(m, ds);
  EvaluateOutcome out;
  out.report = eval::evaluate(m, ds, eval_options_for(c, m.config().sequence_length));
  if (auto q = parse_groups(c.groups)) out.groups = eval::split_top_bottom(out.report, ds, *q);
  return out;
}

inline EvaluateOutcome cmd_evaluate(const RunConfig& c, const fs::path& checkpoint) {
  if (c.k == 0) throw ConfigError("config key 'k' must be at least 1");
  parse_groups(c.groups);
  const data::Dataset ds = load_data(c);
  auto out = evaluate_checkpoint(c, checkpoint, ds);
  Artifacts a(c.out, "evaluate");
  write_resolved_config(a, c);
  write_metrics(a, out.report, out.groups);
  write_ranks(a, out.report, ds);
  log_info("test ", out.report.protocol, ": ", hr_column(c.k), " ", out.report.hr_at_k, ", ", ndcg_column(c.k), " ",
           out.report.ndcg_at_k, " over ", out.report.evaluated_users, " users");
  for (const auto& g : out.groups) {
    if (g.report) log_info("  ", g.name, ": ", hr_column(c.k), " ", g.report->hr_at_k, " over ", g.report->evaluated_users, " users");
  }
  a.write_manifest(c.seed);
  return out;
}

// Variants in the order of the usual ablation table, base model last.
inline const std::vector<std::pair<std::string, std::string>>& ablation_variants() {
  static const std::vector<std::pair<std::string, std::string>> v{
      {"no_intervals", "w/o Intervals"},
      {"no_residuals", "w/o Residuals"},
      {"single_conv", "w/ one Conv"},
      {"avgpool_only", "w/ AvgPool"},
  };
  return v;
}

struct AblationRow {
  std::string variant;
  std::string label;
  eval::MetricReport report;
};

inline std::vector<AblationRow> cmd_ablate(const RunConfig& c, const std::vector<std::string>& flags) {
  for (const auto& f : flags) {
    bool known = false;
    for (const auto& [key, label] : ablation_variants()) known = known || key == f;
    if (!known) {
      throw ConfigError("unknown ablation flag '" + f + "' (expected no_intervals, no_residuals, single_conv, avgpool_only)");
    }
  }
  RunConfig base = c;
  base.model.ablation = {};
  validate(base);
  const data::Dataset ds = load_data(c);
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& key, const std::string& label, const RunConfig& variant) {
    log_info("ablation: training ", label);
    rows.push_back({key, label, train_and_test(variant, ds).test});
  };
  for (const auto& [key, label] : ablation_variants()) {
    if (std::find(flags.begin(), flags.end(), key) == flags.end()) continue;
    RunConfig v = base;
    apply_setting(v, key, "true");
    run(key, label, v);
  }
  run("base", "ConvRec", base);
  Artifacts a(c.out, "ablate");
  write_resolved_config(a, base);
  auto out = a.open("ablation.csv");
  out << "variant,label," << hr_column(c.k) << "," << ndcg_column(c.k) << "\n";
  for (const auto& r : rows) out << r.variant << "," << r.label << "," << fmt(r.report.hr_at_k) << "," << fmt(r.report.ndcg_at_k) << "\n";
  a.write_manifest(c.seed);
  return rows;
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"embedding", "dropout", "kernel_schedule", "seq_length"};
  return axes;
}

struct SweepRow {
  std::string value;
  eval::MetricReport report;
};

inline std::string sweep_key(const std::string& axis) {
  if (axis == "embedding") return "embedding";
  if (axis == "dropout") return "dropout";
  if (axis == "kernel_schedule") return "schedule";
  if (axis == "seq_length") return "sequence_length";
  throw ConfigError("unknown sweep axis '" + axis + "' (expected embedding, dropout, kernel_schedule, seq_length)");
}

inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"") == std::string::npos) return v;
  std::string out = "\"";
  for (char ch : v) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& c, const std::string& axis, const std::vector<std::string>& values) {
  const std::string key = sweep_key(axis);
  if (values.empty()) throw ConfigError("sweep needs at least one value (--values)");
  std::vector<RunConfig> variants;
  for (const auto& v : values) {
    RunConfig r = c;
    apply_setting(r, key, v);
    validate(r);
    variants.push_back(std::move(r));
  }
  const data::Dataset ds = load_data(c);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    log_info("sweep ", axis, " = ", values[i]);
    rows.push_back({values[i], train_and_test(variants[i], ds).test});
  }
  Artifacts a(c.out, "sweep");
  write_resolved_config(a, c);
  auto out = a.open("sweep_" + axis + ".csv");
  out << "value," << hr_column(c.k) << "," << ndcg_column(c.k) << "\n";
  for (const auto& r : rows) out << csv_field(r.value) << "," << fmt(r.report.hr_at_k) << "," << fmt(r.report.ndcg_at_k) << "\n";
  a.write_manifest(c.seed);
  return rows;
}

struct SlopeRow {
  bench::Encoder encoder;
  std::string metric;
  std::optional<bench::SlopeFit> fit;
};

struct BenchOutcome {
  std::vector<bench::ScalingSample> samples;
  std::vector<SlopeRow> slopes;
};

inline std::vector<SlopeRow> fit_all(const std::vector<bench::ScalingSample>& samples,
                                     const std::vector<bench::Encoder>& encoders) {
  std::vector<SlopeRow> out;
  const std::vector<std::pair<bench::Metric, std::string>> metrics{
      {bench::Metric::wall_seconds, "wall_seconds"}, {bench::Metric::peak_bytes, "peak_bytes"}, {bench::Metric::mac_count, "mac_count"}};
  for (auto e : encoders) {
    for (const auto& [metric, name] : metrics) {
      SlopeRow row{e, name, std::nullopt};
      try {
        row.fit = bench::fit_samples(samples, e, metric);
      } catch (const InsufficientData& ex) {
        log_warn(bench::encoder_name(e), " ", name, ": ", ex.what());
      }
      out.push_back(row);
    }
  }
  return out;
}

inline BenchOutcome cmd_bench(const RunConfig& c, std::ostream& report = std::cout) {
  bench::ScalingOptions o = c.bench;
  o.seed = c.seed;
  BenchOutcome out;
  out.samples = bench::measure_scaling(o);
  out.slopes = fit_all(out.samples, o.encoders);
  Artifacts a(c.out, "bench");
  write_resolved_config(a, c);
  {
    auto csv = a.open("bench.csv");
    csv << "encoder,L,batch,median_seconds,peak_bytes,mac_count,oom\n";
    for (const auto& s : out.samples) {
      csv << bench::encoder_name(s.encoder) << "," << s.length << "," << s.batch_size << "," << fmt(s.wall_seconds) << ","
          << s.peak_bytes << "," << s.mac_count << "," << (s.oom ? 1 : 0) << "\n";
    }
  }
  {
    auto dat = a.open("bench.dat");
    dat << "# L";
    for (auto e : o.encoders) dat << " " << bench::encoder_name(e) << "_seconds " << bench::encoder_name(e) << "_bytes";
    dat << "\n";
    for (std::size_t L : o.lengths) {
      dat << L;
      for (auto e : o.encoders) {
        for (const auto& s : out.samples) {
          if (s.encoder != e || s.length != L) continue;
          if (s.oom) {
            dat << " NaN NaN";
          } else {
            dat << " " << fmt(s.wall_seconds) << " " << s.peak_bytes;
          }
        }
      }
      dat << "\n";
    }
  }
  {
    auto csv = a.open("slopes.csv");
    csv << "encoder,metric,slope,r_squared\n";
    for (const auto& r : out.slopes) {
      csv << bench::encoder_name(r.encoder) << "," << r.metric << ",";
      if (r.fit) {
        csv << fmt(r.fit->slope) << "," << fmt(r.fit->r_squared);
      } else {
        csv << ",";
      }
      csv << "\n";
    }
  }
  report << "log-log slopes vs L:\n";
  for (const auto& r : out.slopes) {
    report << "  " << bench::encoder_name(r.encoder) << " " << r.metric << ": ";
    if (r.fit) {
      report << r.fit->slope << " (R^2 " << r.fit->r_squared << ")\n";
    } else {
      report << "insufficient data\n";
    }
  }
  a.write_manifest(c.seed);
  return out;
}

inline std::string shape_text(const numerics::Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " x " : "") + std::to_string(s[i]);
  return out;
}

inline std::string inspect_summary(const fs::path& checkpoint) {
  model::ConvRecModel m = load_model(checkpoint);
  const auto& cfg = m.config();
  std::ostringstream os;
  os << "checkpoint: " << checkpoint.string() << "\n";
  os << "sequence length: " << cfg.sequence_length << "\n";
  if (cfg.ablation.avgpool_only) {
    os << "schedule: none (average pooling)\n";
  } else {
    os << "schedule: " << schedule_text(cfg.effective_schedule()) << " -> lengths "
       << size_list_text(m.schedule().lengths()) << "\n";
  }
  std::vector<std::string> ablations;
  if (cfg.ablation.no_intervals) ablations.push_back("no_intervals");
  if (cfg.ablation.no_residuals) ablations.push_back("no_residuals");
  if (cfg.ablation.single_conv) ablations.push_back("single_conv");
  if (cfg.ablation.avgpool_only) ablations.push_back("avgpool_only");
  os << "ablation:";
  if (ablations.empty()) os << " none";
  for (const auto& a : ablations) os << " " << a;
  os << "\n";
  os << "parameters: " << m.parameter_count() << " in " << m.parameters().size() << " tensors\n";
  for (auto* p : m.parameters()) {
    os << "  " << p->name << "  [" << shape_text(p->shape()) << "]  " << p->size() << (p->trainable ? "" : "  (frozen)")
       << "\n";
  }
  for (std::size_t j = 0; j < m.blocks().size(); ++j) {
    os << "block" << j << ": alpha1 = " << m.blocks()[j].alpha1.value()[0]
       << ", alpha2 = " << m.blocks()[j].alpha2.value()[0] << "\n";
  }
  return os.str();
}

}  // namespace convrec::app
