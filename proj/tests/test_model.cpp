#include <gtest/gtest.h>

#include <random>
#include <set>

#include "convrec/model/cds.hpp"
#include "convrec/model/convrec.hpp"
#include "convrec/model/item_encoder.hpp"
#include "convrec/model/schedule.hpp"
#include "convrec/numerics/grad_check.hpp"
#include "test_util.hpp"

using namespace convrec;
using namespace convrec::model;
using numerics::constant;
using numerics::leaf;
using numerics::Tensor;
using numerics::Var;
using testing_util::random_tensor;

namespace {

ItemEncoderDims small_dims() {
  ItemEncoderDims d;
  d.attribute_dim = 3;
  d.context_dim = 3;
  d.id_rows = 6;  // generic 0, frequent 1..4, pad 5
  d.d_a = 4;
  d.d_c = 4;
  d.d_f = 5;
  d.d_i = 3;
  d.d_v = 6;
  return d;
}

constexpr std::size_t kPadRow = 5;

data::FixedLengthExample random_example(std::size_t L, std::size_t pads, std::size_t candidates,
                                        std::mt19937_64& rng) {
  data::FixedLengthExample ex;
  ex.input_items.assign(L, data::kPad);
  ex.input_rows.assign(L, kPadRow);
  ex.padding_mask.assign(L, true);
  ex.input_attributes = Tensor({L, 3});
  ex.input_contexts = Tensor({L, 3});
  ex.input_calendar = Tensor({L, 3});
  std::uniform_int_distribution<std::size_t> row(0, 4);
  for (std::size_t i = pads; i < L; ++i) {
    ex.input_items[i] = static_cast<std::int64_t>(i);
    ex.input_rows[i] = row(rng);
    ex.padding_mask[i] = false;
    for (std::size_t k = 0; k < 3; ++k) {
      ex.input_attributes(i, k) = std::uniform_real_distribution<double>(-1, 1)(rng);
      ex.input_contexts(i, k) = std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    ex.input_calendar(i, 0) = 2020;
    ex.input_calendar(i, 1) = 1 + static_cast<double>(i % 12);
    ex.input_calendar(i, 2) = 1 + static_cast<double>((i * 7) % 28);
  }
  ex.candidates.items.resize(candidates);
  ex.candidates.rows.resize(candidates);
  for (std::size_t k = 0; k < candidates; ++k) {
    ex.candidates.items[k] = static_cast<std::uint32_t>(100 + k);
    ex.candidates.rows[k] = row(rng);
  }
  ex.candidates.attributes = random_tensor({candidates, 3}, rng);
  ex.candidates.contexts = random_tensor({candidates, 3}, rng);
  return ex;
}

// Scalar readout with a fixed random projection so no gradient is
// structurally zero.
Var readout(const Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var flat = numerics::reshape(x, {1, x.value().size()});
  return numerics::matmul_nt(flat, constant(random_tensor({1, x.value().size()}, rng)));
}

std::vector<Var> vars_of(std::vector<Parameter*> params) {
  std::vector<Var> out;
  for (auto* p : params)
    if (p->trainable) out.push_back(p->var);
  return out;
}

void expect_rows_equal(const Tensor& t, std::span<const double> row, double tol) {
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) EXPECT_NEAR(t(i, j), row[j], tol);
}

}  // namespace

// ---------------------------------------------------------------- encoder

TEST(ItemEncoder, ZeroAttributesGiveBias) {
  std::mt19937_64 rng(1);
  ItemEncoderParams p(small_dims(), rng);
  p.b_a.value() = random_tensor({4}, rng);
  Var out = encode_attributes(p, constant(Tensor({5, 3})));
  expect_rows_equal(out.value(), p.b_a.value().data(), 0.0);
}

TEST(ItemEncoder, IdentityAttributeMap) {
  auto dims = small_dims();
  dims.d_a = 3;
  std::mt19937_64 rng(2);
  ItemEncoderParams p(dims, rng);
  p.W_a.value() = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  p.b_a.value() = Tensor({3});
  Tensor x = random_tensor({4, 3}, rng);
  EXPECT_EQ(encode_attributes(p, constant(x)).value(), x);
}

TEST(ItemEncoder, WidthMismatchIsDimensionError) {
  std::mt19937_64 rng(2);
  ItemEncoderParams p(small_dims(), rng);
  EXPECT_THROW(encode_attributes(p, constant(Tensor({2, 5}))), DimensionError);
  EXPECT_THROW(fuse_feature_context(p, constant(Tensor({2, 4})), constant(Tensor({3, 4}))), DimensionError);
}

TEST(ItemEncoder, ZeroContextGivesBiasAndRowsAreIndependent) {
  std::mt19937_64 rng(3);
  ItemEncoderParams p(small_dims(), rng);
  p.b_c.value() = random_tensor({4}, rng);
  expect_rows_equal(encode_context(p, constant(Tensor({3, 3}))).value(), p.b_c.value().data(), 0.0);
  Tensor ctx = random_tensor({6, 3}, rng);
  Tensor all = encode_context(p, constant(ctx)).value();
  for (std::size_t i = 0; i < 6; ++i) {
    Tensor single({1, 3}, ctx.row(i));
    Tensor one = encode_context(p, constant(single)).value();
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(one(0, j), all(i, j));
  }
}

TEST(ItemEncoder, FusionConcatOrderIsAttributesThenContext) {
  std::mt19937_64 rng(4);
  auto dims = small_dims();
  dims.d_f = 4;
  ItemEncoderParams p(dims, rng);
  // W_f copies the first d_a inputs, i.e. the attribute block.
  Tensor w({8, 4});
  for (std::size_t i = 0; i < 4; ++i) w(i, i) = 1.0;
  p.W_f.value() = w;
  const Tensor bias = p.b_f.value();
  p.b_f.value() = Tensor({4});
  Tensor a = random_tensor({3, 4}, rng), c = random_tensor({3, 4}, rng);
  EXPECT_EQ(fuse_feature_context(p, constant(a), constant(c)).value(), a);
  p.b_f.value() = bias;
  Tensor zero = fuse_feature_context(p, constant(Tensor({2, 4})), constant(Tensor({2, 4}))).value();
  expect_rows_equal(zero, p.b_f.value().data(), 0.0);
}

TEST(ItemEncoder, SharedGenericRowGivesIdenticalEmbeddings) {
  std::mt19937_64 rng(5);
  ItemEncoderParams p(small_dims(), rng);
  Tensor f({1, 5});
  f.row(0)[0] = 0.3;
  Tensor both({2, 5});
  both.row(0)[0] = 0.3;
  both.row(1)[0] = 0.3;
  Tensor v = embed_and_fuse_ids(p, {0, 0}, constant(both)).value();
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(v(0, j), v(1, j));
  EXPECT_THROW(embed_and_fuse_ids(p, {6}, constant(f)), std::out_of_range);
}

TEST(ItemEncoder, PadPositionsUsePadRow) {
  std::mt19937_64 rng(6);
  auto ex = random_example(5, 2, 3, rng);
  EXPECT_EQ(ex.input_rows[0], kPadRow);
  EXPECT_EQ(ex.input_rows[1], kPadRow);
}

TEST(ItemEncoder, IdGradientTouchesOnlyReferencedRows) {
  std::mt19937_64 rng(7);
  ItemEncoderParams p(small_dims(), rng);
  p.id_table.zero_grad();
  Var v = embed_and_fuse_ids(p, {1, 3, 3}, constant(random_tensor({3, 5}, rng)));
  readout(v, 1).backward();
  const Tensor& g = p.id_table.grad();
  for (std::size_t r = 0; r < 6; ++r) {
    double norm = 0.0;
    for (std::size_t j = 0; j < 3; ++j) norm += std::abs(g(r, j));
    if (r == 1 || r == 3) {
      EXPECT_GT(norm, 0.0) << r;
    } else {
      EXPECT_EQ(norm, 0.0) << r;
    }
  }
}

TEST(ItemEncoder, IntervalsAreRawDifferences) {
  Tensor cal = Tensor::matrix({{2020, 1, 10}, {2020, 1, 12}});
  EXPECT_EQ(compute_intervals(cal), Tensor::matrix({{0, 0, 0}, {0, 0, 2}}));
  Tensor wrap = Tensor::matrix({{2020, 1, 28}, {2020, 2, 1}});
  EXPECT_EQ(compute_intervals(wrap), Tensor::matrix({{0, 0, 0}, {0, 1, -27}}));
  Tensor same = Tensor::matrix({{2021, 3, 3}, {2021, 3, 3}, {2021, 3, 3}});
  EXPECT_EQ(compute_intervals(same), Tensor({3, 3}));
}

TEST(ItemEncoder, IntervalIsZeroAtPadBoundary) {
  Tensor cal = Tensor::matrix({{0, 0, 0}, {2020, 5, 5}, {2020, 5, 9}});
  EXPECT_EQ(compute_intervals(cal, {true, false, false}), Tensor::matrix({{0, 0, 0}, {0, 0, 0}, {0, 0, 4}}));
}

TEST(ItemEncoder, FullSizeSequenceShape) {
  ItemEncoderDims d;
  d.attribute_dim = 3;
  d.id_rows = 6;
  std::mt19937_64 rng(8);
  ItemEncoderParams p(d, rng);
  auto ex = random_example(70, 10, 2, rng);
  numerics::NoGradGuard g;
  Var z = encode_sequence(p, ex, 0.0, false, rng);
  EXPECT_EQ(z.shape(), (numerics::Shape{70, 256}));
  EXPECT_EQ(p.W_Q.shape(), (numerics::Shape{259, 256}));
}

TEST(ItemEncoder, AllPadSequenceIsConstantAcrossUsers) {
  std::mt19937_64 rng(9);
  ItemEncoderParams p(small_dims(), rng);
  auto a = random_example(6, 6, 2, rng);
  auto b = random_example(6, 6, 3, rng);
  b.user = 17;
  Tensor za = encode_sequence(p, a, 0.0, false, rng).value();
  Tensor zb = encode_sequence(p, b, 0.0, false, rng).value();
  EXPECT_EQ(za, zb);
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(za(i, j), za(0, j));
}

TEST(ItemEncoder, LayerGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  ItemEncoderParams p(small_dims(), rng);
  Var x = leaf(random_tensor({4, 3}, rng));
  std::vector<Var> in{x, p.W_a.var, p.b_a.var};
  EXPECT_LT(numerics::grad_check([&] { return readout(encode_attributes(p, x), 1); }, in).max_relative_error, 1e-4);
  std::vector<Var> cin{x, p.W_c.var, p.b_c.var};
  EXPECT_LT(numerics::grad_check([&] { return readout(encode_context(p, x), 2); }, cin).max_relative_error, 1e-4);
  Var a = leaf(random_tensor({4, 4}, rng)), c = leaf(random_tensor({4, 4}, rng));
  std::vector<Var> fin{a, c, p.W_f.var, p.b_f.var};
  EXPECT_LT(numerics::grad_check([&] { return readout(fuse_feature_context(p, a, c), 3); }, fin).max_relative_error,
            1e-4);
}

TEST(ItemEncoder, EndToEndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  ItemEncoderParams p(small_dims(), rng);
  auto ex = random_example(5, 1, 3, rng);
  auto inputs = vars_of(p.parameters());
  auto report = numerics::grad_check(
      [&] {
        std::mt19937_64 unused(0);
        return readout(encode_sequence(p, ex, 0.0, false, unused), 5);
      },
      inputs);
  EXPECT_LT(report.max_relative_error, 1e-3) << "input " << report.worst_input << " index " << report.worst_index;
}

TEST(ItemEncoder, TargetMatchesSingletonOfLastEvent) {
  std::mt19937_64 rng(12);
  ItemEncoderParams p(small_dims(), rng);
  auto ex = random_example(4, 0, 3, rng);
  data::CandidateSet c;
  c.items = {3};
  c.rows = {ex.input_rows[3]};
  c.attributes = Tensor({1, 3}, ex.input_attributes.row(3));
  c.contexts = Tensor({1, 3}, ex.input_contexts.row(3));
  Tensor target = encode_target_items(p, c, 0.0, false, rng).value();

  data::FixedLengthExample single;
  single.input_items = {3};
  single.input_rows = c.rows;
  single.padding_mask = {false};
  single.input_attributes = c.attributes;
  single.input_contexts = c.contexts;
  single.input_calendar = Tensor({1, 3}, ex.input_calendar.row(3));
  EXPECT_EQ(encode_sequence(p, single, 0.0, false, rng).value(), target);
}

TEST(ItemEncoder, CandidateBatchIsRowwise) {
  std::mt19937_64 rng(13);
  ItemEncoderParams p(small_dims(), rng);
  auto ex = random_example(3, 0, 101, rng);
  Tensor all = encode_target_items(p, ex.candidates, 0.0, false, rng).value();
  EXPECT_EQ(all.shape(), (numerics::Shape{101, 6}));
  for (std::size_t k : {0, 50, 100}) {
    data::CandidateSet one;
    one.items = {ex.candidates.items[k]};
    one.rows = {ex.candidates.rows[k]};
    one.attributes = Tensor({1, 3}, ex.candidates.attributes.row(k));
    one.contexts = Tensor({1, 3}, ex.candidates.contexts.row(k));
    Tensor row = encode_target_items(p, one, 0.0, false, rng).value();
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(row(0, j), all(k, j));
  }
}

// ---------------------------------------------------------------- schedule

namespace {

// Enumerates right pads until windows tile the padded input exactly.
std::pair<std::size_t, std::size_t> brute_force_layer(std::size_t L, std::size_t K, std::size_t S) {
  for (std::size_t pad = 0;; ++pad) {
    const std::size_t padded = L + pad;
    if (padded < K) continue;
    std::size_t windows = 0, last_end = 0;
    for (std::size_t start = 0; start + K <= padded; start += S) {
      ++windows;
      last_end = start + K;
    }
    if (last_end == padded) return {windows, pad};
  }
}

}  // namespace

TEST(Schedule, BeautyLength) {
  auto plan = plan_schedule(70, {{2, 2}, {5, 5}, {7, 7}});
  EXPECT_EQ(plan.lengths(), (std::vector<std::size_t>{35, 7, 1}));
  EXPECT_EQ(plan.paddings(), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Schedule, PadsLastLayer) {
  auto plan = plan_schedule(50, {{2, 2}, {5, 5}, {7, 7}});
  EXPECT_EQ(plan.lengths(), (std::vector<std::size_t>{25, 5, 1}));
  EXPECT_EQ(plan.paddings(), (std::vector<std::size_t>{0, 0, 2}));
}

TEST(Schedule, SevenWithKernelFive) {
  auto plan = plan_schedule(7, {{5, 5}});
  EXPECT_EQ(plan.lengths(), (std::vector<std::size_t>{2}));
  EXPECT_EQ(plan.paddings(), (std::vector<std::size_t>{3}));
  EXPECT_EQ(brute_force_layer(7, 5, 5), (std::pair<std::size_t, std::size_t>{2, 3}));
}

TEST(Schedule, MatchesBruteForceOracle) {
  for (std::size_t L = 1; L <= 40; ++L)
    for (std::size_t K = 1; K <= 8; ++K)
      for (std::size_t S = 1; S <= K; ++S) {
        auto plan = plan_schedule(L, {{K, S}});
        auto [len, pad] = brute_force_layer(L, K, S);
        EXPECT_EQ(plan.layers[0].output_length, len) << L << " " << K << " " << S;
        EXPECT_EQ(plan.layers[0].right_pad, pad) << L << " " << K << " " << S;
      }
}

TEST(Schedule, EmptyIsConfigError) { EXPECT_THROW(plan_schedule(10, {}), ConfigError); }

TEST(Schedule, MonotoneCompression) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 2 + rng() % 300;
    std::vector<LayerSpec> layers;
    for (int j = 0; j < 4; ++j) {
      const std::size_t k = 2 + rng() % 6;
      layers.push_back({k, 2 + rng() % (k - 1)});
    }
    auto plan = plan_schedule(L, layers);
    for (const auto& l : plan.layers) {
      if (l.input_length >= 2) {
        EXPECT_LT(l.output_length, l.input_length);
      }
    }
  }
}

TEST(Schedule, FlopHandCount) { EXPECT_EQ(count_flops(plan_schedule(4, {{2, 2}}), 1), 6u); }

TEST(Schedule, FlopsAtMostDoubleWhenLengthDoubles) {
  for (std::size_t L : {16, 64, 128, 512, 1000}) {
    const auto small = count_flops(plan_schedule(L, schedule_family(L)), 8);
    const auto big = count_flops(plan_schedule(2 * L, schedule_family(2 * L)), 8);
    EXPECT_LE(big, 2 * small + 8 * 8 * 16) << L;
  }
}

TEST(Schedule, FamilyEndsAtOne) {
  for (std::size_t L : {1, 7, 8, 70, 256, 2048, 3000}) EXPECT_EQ(plan_schedule(L, schedule_family(L)).final_length(), 1u);
}

// ---------------------------------------------------------------- CDS

TEST(ConvBlock, FirstBlockResidualsBothFromZ) {
  std::mt19937_64 rng(15);
  ConvBlockParams p(0, 4, 2, rng);
  p.alpha1.value()[0] = 0.3;
  p.alpha2.value()[0] = 0.7;
  Var z = constant(random_tensor({6, 4}, rng));
  auto plan = plan_schedule(6, {{2, 2}});
  Tensor out = conv_block(p, plan.layers[0], z, z, z, {}, rng).value();
  ConvBlockParams q(0, 4, 2, rng);
  for (std::size_t i = 0; i < 8; ++i) q.parameters()[i]->value() = p.parameters()[i]->value();
  q.alpha1.value()[0] = 1.0;
  q.alpha2.value()[0] = 0.0;
  Tensor single = conv_block(q, plan.layers[0], z, z, z, {}, rng).value();
  EXPECT_LT(numerics::max_abs_diff(out, single), 1e-12);
}

TEST(ConvBlock, DegenerateWeightsGiveConstantRows) {
  std::mt19937_64 rng(16);
  ConvBlockParams p(0, 5, 3, rng);
  p.kernels.value().fill(0.0);
  p.W_G.value().fill(0.0);
  p.alpha1.value().fill(0.0);
  p.alpha2.value().fill(0.0);
  p.b_G.value() = random_tensor({5}, rng);
  Var z = constant(random_tensor({9, 5}, rng));
  auto plan = plan_schedule(9, {{3, 3}});
  Tensor out = conv_block(p, plan.layers[0], z, z, z, {}, rng).value();
  Tensor row({1, 5});
  for (std::size_t j = 0; j < 5; ++j) row[j] = numerics::gelu_value(p.b_G.value()[j]);
  Tensor expected = numerics::layer_norm(constant(row), constant(Tensor({5}, 1.0)), constant(Tensor({5})),
                                         kLayerNormEpsilon)
                        .value();
  expect_rows_equal(out, expected.data(), 1e-12);
}

TEST(ConvBlock, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  ConvBlockParams p(0, 4, 3, rng);
  p.conv_bias.value() = random_tensor({4}, rng);
  p.b_G.value() = random_tensor({4}, rng);
  Var prev = leaf(random_tensor({8, 4}, rng));
  Var z = leaf(random_tensor({11, 4}, rng));
  Var prog = leaf(random_tensor({8, 4}, rng));
  auto plan = plan_schedule(8, {{3, 2}});
  std::vector<Var> inputs{prev, z, prog};
  for (auto* q : p.parameters()) inputs.push_back(q->var);
  auto report = numerics::grad_check(
      [&] {
        std::mt19937_64 unused(0);
        return readout(conv_block(p, plan.layers[0], prev, z, prog, {}, unused), 9);
      },
      inputs);
  EXPECT_LT(report.max_relative_error, 1e-3) << "input " << report.worst_input << " index " << report.worst_index;
}

TEST(Cds, BeautyOutputShape) {
  std::mt19937_64 rng(18);
  std::vector<ConvBlockParams> blocks;
  for (std::size_t j = 0; j < 3; ++j) blocks.emplace_back(j, 16, std::vector<std::size_t>{2, 5, 7}[j], rng);
  auto plan = plan_schedule(70, {{2, 2}, {5, 5}, {7, 7}});
  Var x = cds_forward(blocks, plan, constant(random_tensor({70, 16}, rng)), {}, rng);
  EXPECT_EQ(x.shape(), (numerics::Shape{1, 16}));
}

TEST(Cds, TwoLayerVariantLengths) {
  auto plan = plan_schedule(70, {{10, 10}, {7, 7}});
  EXPECT_EQ(plan.lengths(), (std::vector<std::size_t>{7, 1}));
}

TEST(Cds, OutputIsOneRowForAnyLength) {
  std::mt19937_64 rng(19);
  std::vector<ConvBlockParams> blocks;
  blocks.emplace_back(0, 3, 3, rng);
  blocks.emplace_back(1, 3, 2, rng);
  for (std::size_t L = 1; L <= 30; ++L) {
    auto plan = plan_schedule(L, {{3, 3}, {2, 2}});
    Var x = cds_forward(blocks, plan, constant(random_tensor({L, 3}, rng)), {}, rng);
    EXPECT_EQ(x.shape(), (numerics::Shape{1, 3})) << L;
  }
}

TEST(Cds, SingleFullWidthConvIsFullyConnected) {
  std::mt19937_64 rng(20);
  const std::size_t L = 5, d = 3;
  ConvBlockParams p(0, d, L, rng);
  p.conv_bias.value() = random_tensor({d}, rng);
  p.alpha1.value().fill(0.0);
  p.alpha2.value().fill(0.0);
  Tensor z = random_tensor({L, d}, rng);
  auto plan = plan_schedule(L, {{L, L}});
  ASSERT_EQ(plan.lengths(), (std::vector<std::size_t>{1}));
  Tensor conv = numerics::conv1d(numerics::transpose(constant(z)), p.kernels, p.conv_bias, L, {}).value();
  // Flatten the whole sequence and apply one dense layer.
  Tensor flat({1, d * L}), w({d * L, d});
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t t = 0; t < L; ++t) {
      flat[c * L + t] = z(t, c);
      for (std::size_t o = 0; o < d; ++o) w(c * L + t, o) = p.kernels.value()(o, c, t);
    }
  Tensor dense = numerics::linear(constant(flat), constant(w), p.conv_bias).value();
  for (std::size_t o = 0; o < d; ++o) EXPECT_NEAR(conv[o], dense[o], 1e-12);
}

TEST(Cds, NonOverlappingReceptiveFields) {
  std::mt19937_64 rng(21);
  const std::size_t L = 12, d = 3;
  ConvBlockParams p(0, d, 3, rng);
  p.alpha1.freeze();
  p.alpha2.freeze();
  p.alpha1.value().fill(0.0);
  p.alpha2.value().fill(0.0);
  auto plan = plan_schedule(L, {{3, 3}});
  for (std::size_t out = 0; out < 4; ++out) {
    Var prev = leaf(random_tensor({L, d}, rng));
    Var o = conv_block(p, plan.layers[0], prev, constant(prev.value()), constant(prev.value()), {}, rng);
    Tensor pick({1, o.value().size()});
    for (std::size_t j = 0; j < d; ++j) pick(0, out * d + j) = 1.0 + static_cast<double>(j);
    numerics::matmul_nt(numerics::reshape(o, {1, o.value().size()}), constant(pick)).backward();
    for (std::size_t t = 0; t < L; ++t) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += std::abs(prev.grad()(t, j));
      if (t / 3 == out) {
        EXPECT_GT(norm, 0.0);
      } else {
        EXPECT_EQ(norm, 0.0) << "output " << out << " input " << t;
      }
    }
  }
}

TEST(Cds, ResidualAblationCutsPooledPath) {
  std::mt19937_64 rng(22);
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 10;
  cfg.schedule = {{2, 2}, {5, 5}};
  cfg.ablation.no_residuals = true;
  ConvRecModel model(cfg, 3);
  for (auto& b : model.blocks()) b.kernels.value().fill(0.0);
  Var z = leaf(random_tensor({10, 6}, rng));
  readout(model.sequence_vector(z, false, rng), 4).backward();
  for (double g : z.grad().data()) EXPECT_EQ(g, 0.0);
  for (auto& b : model.blocks()) {
    EXPECT_EQ(b.alpha1.value()[0], 0.0);
    EXPECT_FALSE(b.alpha1.trainable);
  }
}

TEST(Cds, PoolToLengthHandlesOverlappingSchedules) {
  std::mt19937_64 rng(23);
  Var x = constant(random_tensor({10, 2}, rng));
  for (std::size_t target = 1; target <= 10; ++target)
    EXPECT_EQ(pool_to_length(x, target).value().rows(), target);
  Var c = constant(Tensor({10, 2}, 2.5));
  Tensor pooled = pool_to_length(c, 4).value();
  for (double v : pooled.data()) EXPECT_NEAR(v, 2.5, 1e-12);
}

// ---------------------------------------------------------------- model

TEST(Model, AblationCombinationRejected) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.ablation.single_conv = true;
  cfg.ablation.avgpool_only = true;
  EXPECT_THROW(ConvRecModel(cfg, 1), ConfigError);
}

TEST(Model, SingleConvUsesFullWidthSchedule) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 9;
  cfg.ablation.single_conv = true;
  ConvRecModel m(cfg, 1);
  ASSERT_EQ(m.blocks().size(), 1u);
  EXPECT_EQ(m.blocks()[0].kernel_size(), 9u);
  EXPECT_EQ(m.schedule().lengths(), (std::vector<std::size_t>{1}));
}

TEST(Model, AvgPoolOnlyIsMeanOfZ) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 5;
  cfg.ablation.avgpool_only = true;
  ConvRecModel m(cfg, 1);
  EXPECT_TRUE(m.blocks().empty());
  std::mt19937_64 rng(1);
  Tensor z = random_tensor({5, 6}, rng);
  Tensor x = m.sequence_vector(constant(z), false, rng).value();
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += z(i, j);
    EXPECT_NEAR(x[j], s / 5.0, 1e-12);
  }
}

TEST(Model, NoIntervalsIgnoresSpacing) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 6;
  cfg.schedule = {{2, 2}, {3, 3}};
  cfg.ablation.no_intervals = true;
  ConvRecModel m(cfg, 2);
  std::mt19937_64 rng(3);
  auto ex = random_example(6, 1, 4, rng);
  auto shifted = ex;
  for (std::size_t i = 1; i < 6; ++i) shifted.input_calendar(i, 2) = static_cast<double>(i * 3);
  EXPECT_EQ(m.score_candidates(ex), m.score_candidates(shifted));
  cfg.ablation.no_intervals = false;
  ConvRecModel with(cfg, 2);
  EXPECT_NE(with.score_candidates(ex), with.score_candidates(shifted));
}

TEST(Model, ScoreIsDotProduct) {
  Tensor x({1, 3}, {0.6, 0.8, 0.0});
  Tensor t = Tensor::matrix({{0.6, 0.8, 0.0}, {0.8, -0.6, 0.0}, {0, 0, 2}});
  Tensor y = score(constant(x), constant(t)).value();
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
  EXPECT_NEAR(y[2], 0.0, 1e-15);
  Tensor perm = Tensor::matrix({{0, 0, 2}, {0.6, 0.8, 0.0}, {0.8, -0.6, 0.0}});
  Tensor yp = score(constant(x), constant(perm)).value();
  EXPECT_EQ(yp[0], y[2]);
  EXPECT_EQ(yp[1], y[0]);
  EXPECT_THROW(score(constant(x), constant(Tensor({2, 4}))), DimensionError);
}

TEST(Model, StateRoundTrip) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 10;
  cfg.schedule = {{2, 2}, {5, 5}};
  ConvRecModel a(cfg, 5), b(cfg, 6);
  std::mt19937_64 rng(4);
  auto ex = random_example(10, 3, 5, rng);
  EXPECT_NE(a.score_candidates(ex), b.score_candidates(ex));
  auto bytes = numerics::encode_checkpoint(a.state());
  auto records = numerics::decode_checkpoint(bytes);
  b.load_state(records);
  EXPECT_EQ(a.score_candidates(ex), b.score_candidates(ex));
  auto restored = config_from_state(records);
  EXPECT_EQ(restored.schedule, cfg.schedule);
  EXPECT_EQ(restored.sequence_length, 10u);
  EXPECT_EQ(restored.dims.d_v, 6u);
}

TEST(Model, StateMismatchDetected) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 10;
  cfg.schedule = {{2, 2}, {5, 5}};
  ConvRecModel a(cfg, 5);
  auto other = cfg;
  other.schedule = {{2, 2}, {3, 3}};
  ConvRecModel b(other, 5);
  EXPECT_THROW(b.load_state(a.state()), CheckpointMismatch);
  auto missing = a.state();
  missing.pop_back();
  EXPECT_THROW(a.load_state(missing), CheckpointMismatch);
}

TEST(Model, BatchPermutationHasNoCrossTalk) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.sequence_length = 8;
  cfg.schedule = {{2, 2}, {4, 4}};
  ConvRecModel m(cfg, 9);
  std::mt19937_64 rng(5);
  auto a = random_example(8, 2, 4, rng);
  auto b = random_example(8, 0, 4, rng);
  const auto sa = m.score_candidates(a);
  const auto sb = m.score_candidates(b);
  EXPECT_EQ(m.score_candidates(b), sb);
  EXPECT_EQ(m.score_candidates(a), sa);
}

TEST(Model, EndToEndLossGradientMatchesFiniteDifferences) {
  ModelConfig cfg;
  cfg.dims = small_dims();
  cfg.dims.d_v = 8;
  cfg.sequence_length = 10;
  cfg.schedule = {{2, 2}, {5, 5}};
  ConvRecModel m(cfg, 11);
  std::mt19937_64 rng(6);
  auto ex = random_example(10, 2, 4, rng);
  auto inputs = vars_of(m.parameters());
  auto report = numerics::grad_check(
      [&] {
        std::mt19937_64 unused(0);
        return m.loss(ex, false, unused);
      },
      inputs);
  EXPECT_LT(report.max_relative_error, 1e-3) << "input " << report.worst_input << " index " << report.worst_index
                                             << " analytic " << report.worst_analytic << " numeric "
                                             << report.worst_numeric;
}
