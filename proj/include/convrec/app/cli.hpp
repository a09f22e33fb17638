#pragma once

#include <exception>
#include <iostream>
#include <new>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "convrec/app/commands.hpp"
#include "convrec/app/config.hpp"
#include "convrec/error.hpp"
#include "convrec/log.hpp"
#include "convrec/numerics/memory.hpp"

namespace convrec::app {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kInternal = 1 };

// Maps the exception family of a failed run onto the exit-code contract.
inline int exit_code_for(const std::exception_ptr& error, std::ostream& err) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kData;
  } catch (const CheckpointMismatch& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const UndefinedMetric& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kInternal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Attribute-aware sequential recommendation with down-scaling convolutions"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, data_path;
  std::vector<std::string> assignments;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool quiet = false, verbose = false;
  auto* config_opt = app.add_option("--config", config_path, "Config file (key = value lines)");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed for initialization, sampling and evaluation");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  auto* threads_opt = app.add_option("--threads", threads, "Evaluation worker threads")->check(CLI::PositiveNumber);
  auto* data_opt = app.add_option("--data", data_path, "Interactions file (JSON lines)");
  app.add_option("--set", assignments, "Override a config key: --set key=value (repeatable)");
  app.add_flag("--quiet", quiet, "Only print errors");
  app.add_flag("--verbose", verbose, "Print per-epoch debug output");

  auto* train_cmd = app.add_subcommand("train", "Train a model, write checkpoint, log and test metrics");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  std::string checkpoint, protocol, groups;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* protocol_opt = eval_cmd->add_option("--protocol", protocol, "all_items or sampled(N)");
  auto* groups_opt = eval_cmd->add_option("--groups", groups, "Per-group breakdown, e.g. top_bottom:0.2");

  auto* bench_cmd = app.add_subcommand("bench", "Scaling benchmark of the convolutional vs attention encoder");
  std::vector<std::size_t> lengths;
  std::size_t bench_batch = 0, bench_width = 0, repetitions = 0;
  auto* lengths_opt = bench_cmd->add_option("--lengths", lengths, "Sequence lengths (ascending)");
  auto* batch_opt = bench_cmd->add_option("--batch", bench_batch, "Batch size");
  auto* width_opt = bench_cmd->add_option("--d-v", bench_width, "Embedding width");
  auto* reps_opt = bench_cmd->add_option("--repetitions", repetitions, "Timed repetitions (at least 5)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare ablation variants against the base model");
  std::vector<std::string> flags{"no_intervals", "no_residuals", "single_conv", "avgpool_only"};
  ablate_cmd->add_option("--flags", flags, "Variants to run")->delimiter(',')->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate once per value of one hyperparameter");
  std::string axis;
  std::vector<std::string> values;
  sweep_cmd->add_option("--axis", axis, "embedding, dropout, kernel_schedule or seq_length")->required();
  sweep_cmd->add_option("--values", values, "Values to try (repeat the flag, or separate with ;)")->required()->delimiter(';')->allow_extra_args(false);

  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint");
  std::string inspect_path;
  inspect_cmd->add_option("--checkpoint", inspect_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    log_level() = quiet ? LogLevel::quiet : verbose ? LogLevel::debug : LogLevel::info;
    RunConfig c;
    if (*config_opt) apply_config_file(c, config_path);
    for (const auto& a : assignments) apply_assignment(c, a);
    if (*seed_opt) c.seed = seed;
    if (*out_opt) c.out = out_dir;
    if (*threads_opt) c.threads = threads;
    if (*data_opt) c.interactions = data_path;
    numerics::set_execution_threads(static_cast<int>(c.threads));

    if (*train_cmd) {
      cmd_train(c);
    } else if (*eval_cmd) {
      if (*protocol_opt) apply_setting(c, "protocol", protocol);
      if (*groups_opt) c.groups = groups;
      cmd_evaluate(c, checkpoint);
    } else if (*bench_cmd) {
      if (*lengths_opt) c.bench.lengths = lengths;
      if (*batch_opt) c.bench.batch_size = bench_batch;
      if (*width_opt) c.bench.d_v = bench_width;
      if (*reps_opt) c.bench.repetitions = repetitions;
      cmd_bench(c, out);
    } else if (*ablate_cmd) {
      cmd_ablate(c, flags);
    } else if (*sweep_cmd) {
      // A single JSON list stands for several values.
      if (values.size() == 1 && !values[0].empty() && values[0].front() == '[' && axis != "kernel_schedule") {
        const auto j = detail::parse_json("--values", values[0]);
        values.clear();
        for (const auto& v : j) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      cmd_sweep(c, axis, values);
    } else if (*inspect_cmd) {
      const std::string summary = inspect_summary(inspect_path);
      out << summary;
      if (*out_opt) {
        Artifacts a(c.out, "inspect");
        a.open("inspect.txt") << summary;
        a.write_manifest(c.seed);
      }
    }
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }
  return kOk;
}

}  // namespace convrec::app
