#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "convrec/data/dataset.hpp"
#include "convrec/data/examples.hpp"
#include "convrec/error.hpp"
#include "convrec/eval/evaluator.hpp"
#include "convrec/log.hpp"
#include "convrec/model/convrec.hpp"
#include "convrec/numerics/adam.hpp"
#include "convrec/numerics/memory.hpp"

namespace convrec::train {

struct TrainConfig {
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::size_t negatives = 100;
  std::size_t validation_negatives = 100;
  std::size_t validate_every = 1;
  std::size_t eval_threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (negatives == 0) throw ConfigError("negatives must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (validate_every == 0) throw ConfigError("validate_every must be at least 1");
  }

  numerics::AdamOptions adam() const {
    numerics::AdamOptions o;
    o.learning_rate = learning_rate;
    o.weight_decay = weight_decay;
    return o;
  }
};

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t examples = 0;
  std::size_t batches = 0;
};

// One pass over shuffled users, one sampled subsequence each. The batch loss
// is the mean of per-example losses; each example gets its own tape so peak
// memory stays at a single example's activations.
inline EpochResult train_epoch(model::ConvRecModel& m, const data::Dataset& ds, const TrainConfig& config,
                               std::mt19937_64& rng, std::size_t epoch = 0) {
  std::vector<std::uint32_t> users;
  for (const auto& seq : ds.users)
    if (data::training_positions(seq) > 0) users.push_back(seq.user_index);
  if (users.empty()) throw DataError("no user has at least two training events");
  std::shuffle(users.begin(), users.end(), rng);

  auto params = m.trainable_parameters();
  const std::size_t L = m.config().sequence_length;
  EpochResult result;
  double total = 0.0;
  for (std::size_t start = 0; start < users.size(); start += config.batch_size) {
    const std::size_t stop = std::min(users.size(), start + config.batch_size);
    const double weight = 1.0 / static_cast<double>(stop - start);
    for (auto* p : params) p->zero_grad();
    for (std::size_t i = start; i < stop; ++i) {
      const auto& seq = ds.users[users[i]];
      auto ex = data::make_training_example(ds, seq, L, config.negatives, rng);
      numerics::Var loss = numerics::scale(m.loss(*ex, true, rng), weight);
      const double value = loss.value()[0] / weight;
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(result.batches) + ", user '" + ds.user_keys[seq.user_index] + "'");
      }
      loss.backward();
      total += value;
      ++result.examples;
    }
    numerics::adam_step(params, config.adam());
    ++result.batches;
  }
  result.mean_loss = total / static_cast<double>(result.examples);
  return result;
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
  double seconds = 0.0;
  std::size_t peak_bytes = 0;
};

struct FitResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_ndcg10 = -1.0;
  bool stopped_early = false;
};

inline eval::EvalOptions validation_options(const model::ConvRecModel& m, const TrainConfig& config) {
  eval::EvalOptions o;
  o.mode = data::EvalMode::validation;
  o.protocol = data::NegativeProtocol::sampled(config.validation_negatives);
  o.k = 10;
  o.seed = config.seed ^ 0x5eed5eed5eedULL;
  o.sequence_length = m.config().sequence_length;
  o.threads = config.eval_threads;
  return o;
}

// Trains with early stopping on validation NDCG@10 and leaves the best
// weights in `m`.
inline FitResult fit(model::ConvRecModel& m, const data::Dataset& ds, const TrainConfig& config,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const auto vopts = validation_options(m, config);
  FitResult result;
  std::vector<numerics::NamedTensor> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    numerics::MemoryTracker::instance().reset_peak();
    const EpochResult er = train_epoch(m, ds, config, rng, epoch);
    EpochLog row;
    row.epoch = epoch;
    row.mean_loss = er.mean_loss;
    const bool validate = epoch % config.validate_every == 0 || epoch == config.max_epochs;
    if (validate) {
      const auto report = eval::evaluate(m, ds, vopts);
      row.val_hr10 = report.hr_at_k;
      row.val_ndcg10 = report.ndcg_at_k;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.peak_bytes = numerics::MemoryTracker::instance().peak_bytes();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    log_debug("epoch ", epoch, " loss ", row.mean_loss, " val HR@10 ", row.val_hr10, " NDCG@10 ", row.val_ndcg10);
    if (!validate) continue;
    if (row.val_ndcg10 > result.best_val_ndcg10) {
      result.best_val_ndcg10 = row.val_ndcg10;
      result.best_epoch = epoch;
      best = m.state();
      since_best = 0;
    } else if (++since_best > config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) m.load_state(best);
  log_info("training finished: best epoch ", result.best_epoch, ", validation NDCG@10 ", result.best_val_ndcg10,
           result.stopped_early ? " (early stop)" : "");
  return result;
}

}  // namespace convrec::train
