#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "convrec/train/trainer.hpp"
#include "oracles.hpp"

using namespace convrec;
using numerics::constant;
using numerics::Tensor;

namespace {

// One user walking items 0..length-1 of a catalog of `catalog` items.
data::Dataset single_user(std::size_t length, std::size_t catalog, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  data::ItemAttributeTable table;
  for (std::size_t i = 0; i < catalog; ++i) table["i" + std::to_string(i)] = data::synthetic::random_attributes(4, rng);
  std::vector<data::InteractionRecord> records;
  for (std::size_t t = 0; t < length; ++t) {
    data::InteractionRecord r;
    r.user = "solo";
    r.item = "i" + std::to_string(t);
    r.timestamp = data::synthetic::kBaseTimestamp + static_cast<std::int64_t>(t) * data::synthetic::kDay;
    records.push_back(std::move(r));
  }
  return data::build_dataset(records, {}, &table);
}

data::Dataset ring(std::size_t users, std::size_t items, std::size_t length, std::uint64_t seed = 1) {
  data::synthetic::RingOptions o;
  o.users = users;
  o.items = items;
  o.length = length;
  o.seed = seed;
  return data::build_dataset(data::synthetic::ring_sequences(o), {});
}

train::TrainConfig quick_config(std::uint64_t seed) {
  train::TrainConfig c;
  c.batch_size = 8;
  c.learning_rate = 5e-3;
  c.max_epochs = 6;
  c.negatives = 10;
  c.validation_negatives = 20;
  c.seed = seed;
  return c;
}

void permute_candidates(data::CandidateSet& c, const std::vector<std::size_t>& order) {
  data::CandidateSet out = c;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.items[i] = c.items[order[i]];
    out.rows[i] = c.rows[order[i]];
    for (std::size_t k = 0; k < c.attributes.cols(); ++k) out.attributes(i, k) = c.attributes(order[i], k);
    for (std::size_t k = 0; k < c.contexts.cols(); ++k) out.contexts(i, k) = c.contexts(order[i], k);
  }
  c = std::move(out);
}

double loss_of(const model::ConvRecModel& m, const data::FixedLengthExample& ex) {
  std::mt19937_64 unused(0);
  numerics::NoGradGuard guard;
  return m.loss(ex, false, unused).value()[0];
}

}  // namespace

TEST(Bce, UninformativeLogitsGiveTwoLogTwo) {
  auto loss = numerics::bce_with_logits(constant(Tensor({2}, {0.0, 0.0})));
  EXPECT_NEAR(loss.value()[0], 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(loss.value()[0], 1.3863, 1e-4);
}

TEST(Bce, ConfidentCorrectLogitsGiveNearZero) {
  auto loss = numerics::bce_with_logits(constant(Tensor({3}, {30.0, -30.0, -30.0})));
  EXPECT_LT(loss.value()[0], 1e-8);
  EXPECT_GE(loss.value()[0], 0.0);
}

TEST(Bce, ExtremeLogitsDoNotOverflow) {
  auto good = numerics::bce_with_logits(constant(Tensor({2}, {1000.0, -1000.0})));
  EXPECT_EQ(good.value()[0], 0.0);
  auto bad = numerics::bce_with_logits(constant(Tensor({2}, {-1000.0, 1000.0})));
  EXPECT_DOUBLE_EQ(bad.value()[0], 2000.0);
}

TEST(Bce, GradientClosedForm) {
  auto y = numerics::leaf(Tensor({3}, {0.5, -1.0, 2.0}));
  numerics::bce_with_logits(y).backward();
  auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  EXPECT_NEAR(y.grad()[0], s(0.5) - 1.0, 1e-15);
  EXPECT_NEAR(y.grad()[1], s(-1.0), 1e-15);
  EXPECT_NEAR(y.grad()[2], s(2.0), 1e-15);
}

TEST(TrainConfig, RejectsInvalidValues) {
  train::TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.negatives = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weight_decay = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainingExample, HundredNegativesGiveHundredOneCandidates) {
  auto ds = ring(10, 300, 12);
  std::mt19937_64 rng(1);
  for (const auto& seq : ds.users) {
    auto ex = data::make_training_example(ds, seq, 10, 100, rng);
    ASSERT_TRUE(ex);
    EXPECT_EQ(ex->candidates.size(), 101u);
    EXPECT_EQ(ex->candidates.attributes.rows(), 101u);
  }
}

TEST(Loss, InvariantToNegativeOrder) {
  auto ds = ring(6, 80, 10);
  model::ConvRecModel m(oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}}), 3);
  std::mt19937_64 rng(5);
  for (const auto& seq : ds.users) {
    auto ex = *data::make_training_example(ds, seq, 8, 12, rng);
    const double before = loss_of(m, ex);
    std::vector<std::size_t> order(ex.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin() + 1, order.end(), rng);
    permute_candidates(ex.candidates, order);
    EXPECT_NEAR(loss_of(m, ex), before, 1e-12);
  }
}

TEST(Loss, SwappingPositiveChangesLoss) {
  auto ds = ring(3, 80, 10);
  model::ConvRecModel m(oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}}), 3);
  std::mt19937_64 rng(6);
  auto ex = *data::make_training_example(ds, ds.users[0], 8, 12, rng);
  const double before = loss_of(m, ex);
  std::vector<std::size_t> order(ex.candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[0], order[1]);
  permute_candidates(ex.candidates, order);
  EXPECT_NE(loss_of(m, ex), before);
}

TEST(Adam, SmallStepDescendsOnFixedBatch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto ds = ring(8, 60, 10, seed + 1);
    model::ConvRecModel m(oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}}), seed);
    std::mt19937_64 rng(seed);
    std::vector<data::FixedLengthExample> batch;
    for (const auto& seq : ds.users) batch.push_back(*data::make_training_example(ds, seq, 8, 10, rng));
    auto batch_loss = [&] {
      double total = 0.0;
      for (const auto& ex : batch) total += loss_of(m, ex);
      return total / static_cast<double>(batch.size());
    };
    const double before = batch_loss();
    auto params = m.trainable_parameters();
    for (auto* p : params) p->zero_grad();
    for (const auto& ex : batch) {
      std::mt19937_64 unused(0);
      numerics::scale(m.loss(ex, true, unused), 1.0 / static_cast<double>(batch.size())).backward();
    }
    numerics::AdamOptions o;
    o.learning_rate = 1e-4;
    numerics::adam_step(params, o);
    EXPECT_LT(batch_loss(), before) << "seed " << seed;
  }
}

TEST(TrainEpoch, OneStepPerBatch) {
  auto ds = ring(20, 60, 8);
  model::ConvRecModel m(oracles::small_model_config(ds, 6, 8, {{2, 2}, {3, 3}}), 1);
  auto c = quick_config(1);
  c.batch_size = 6;
  std::mt19937_64 rng(1);
  auto r = train::train_epoch(m, ds, c, rng);
  EXPECT_EQ(r.batches, 4u);
  EXPECT_EQ(r.examples, 20u);
  EXPECT_EQ(m.encoder().W_Q.step_count, 4u);
  EXPECT_TRUE(std::isfinite(r.mean_loss));
}

TEST(TrainEpoch, NonFiniteLossNamesEpochAndUser) {
  auto ds = ring(4, 40, 8);
  model::ConvRecModel m(oracles::small_model_config(ds, 6, 8, {{2, 2}, {3, 3}}), 1);
  m.encoder().b_Q.value().fill(std::nan(""));
  std::mt19937_64 rng(1);
  try {
    train::train_epoch(m, ds, quick_config(1), rng, 7);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("user 'u"), std::string::npos);
  }
}

TEST(TrainEpoch, FrozenResidualWeightsStayZero) {
  auto ds = ring(10, 60, 10);
  auto mc = oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}});
  mc.ablation.no_residuals = true;
  model::ConvRecModel m(mc, 2);
  std::mt19937_64 rng(1);
  train::train_epoch(m, ds, quick_config(2), rng);
  for (const auto& b : m.blocks()) {
    EXPECT_EQ(b.alpha1.value()[0], 0.0);
    EXPECT_EQ(b.alpha2.value()[0], 0.0);
  }
}

TEST(Fit, SingleUserIsMemorized) {
  auto ds = single_user(10, 40, 3);
  auto mc = oracles::small_model_config(ds, 8, 16, {{2, 2}, {4, 4}});
  model::ConvRecModel m(mc, 3);
  train::TrainConfig c;
  c.batch_size = 1;
  c.learning_rate = 1e-2;
  c.max_epochs = 200;
  c.patience = 1000;
  c.negatives = 10;
  c.validation_negatives = 20;
  c.validate_every = 50;
  auto result = train::fit(m, ds, c);
  double tail = 0.0;
  for (std::size_t i = result.log.size() - 10; i < result.log.size(); ++i) tail += result.log[i].mean_loss;
  EXPECT_LT(tail / 10.0, 0.05);
  EXPECT_LT(tail / 10.0, result.log.front().mean_loss);
}

TEST(Fit, SameSeedGivesIdenticalTrajectory) {
  auto ds = ring(16, 60, 10);
  auto mc = oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}});
  mc.dropout_rate = 0.2;
  model::ConvRecModel a(mc, 5), b(mc, 5);
  auto ra = train::fit(a, ds, quick_config(11));
  auto rb = train::fit(b, ds, quick_config(11));
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].mean_loss, rb.log[i].mean_loss);
    EXPECT_EQ(ra.log[i].val_ndcg10, rb.log[i].val_ndcg10);
  }
  auto sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].tensor, sb[i].tensor) << sa[i].name;
}

TEST(Fit, DifferentSeedsDiverge) {
  auto ds = ring(16, 60, 10);
  auto mc = oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}});
  model::ConvRecModel a(mc, 5), b(mc, 5);
  auto ra = train::fit(a, ds, quick_config(1));
  auto rb = train::fit(b, ds, quick_config(2));
  EXPECT_NE(ra.log.back().mean_loss, rb.log.back().mean_loss);
}

TEST(Fit, EarlyStoppingFollowsPatienceRule) {
  auto ds = ring(16, 60, 10);
  auto mc = oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}});
  for (std::size_t patience : {0u, 1u, 3u}) {
    model::ConvRecModel m(mc, 8);
    auto c = quick_config(4);
    c.learning_rate = 3e-2;
    c.max_epochs = 40;
    c.patience = patience;
    auto r = train::fit(m, ds, c);
    double best = -1.0;
    std::size_t since = 0, expected_stop = c.max_epochs, expected_best = 0;
    for (std::size_t e = 1; e <= c.max_epochs; ++e) {
      ASSERT_LE(e, r.log.size());
      if (r.log[e - 1].val_ndcg10 > best) {
        best = r.log[e - 1].val_ndcg10;
        expected_best = e;
        since = 0;
      } else if (++since > patience) {
        expected_stop = e;
        break;
      }
    }
    EXPECT_EQ(r.log.size(), expected_stop) << "patience " << patience;
    EXPECT_EQ(r.stopped_early, expected_stop < c.max_epochs || since > patience);
    EXPECT_EQ(r.best_epoch, expected_best);
  }
}

TEST(Fit, BestWeightsAreRestored) {
  auto ds = ring(16, 60, 10);
  auto mc = oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}});
  model::ConvRecModel m(mc, 8);
  auto c = quick_config(4);
  c.learning_rate = 3e-2;
  c.max_epochs = 12;
  c.patience = 100;
  auto r = train::fit(m, ds, c);
  auto report = eval::evaluate(m, ds, train::validation_options(m, c));
  EXPECT_EQ(report.ndcg_at_k, r.best_val_ndcg10);
}

TEST(Fit, ValidateEveryLeavesGaps) {
  auto ds = ring(8, 60, 10);
  model::ConvRecModel m(oracles::small_model_config(ds, 8, 8, {{2, 2}, {4, 4}}), 1);
  auto c = quick_config(1);
  c.max_epochs = 5;
  c.validate_every = 2;
  std::vector<std::size_t> seen;
  train::fit(m, ds, c, [&](const train::EpochLog& l) { seen.push_back(l.epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
}
