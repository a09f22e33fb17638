#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "convrec/data/examples.hpp"
#include "convrec/numerics/ops.hpp"
#include "convrec/numerics/parameter.hpp"

namespace convrec::model {

using numerics::Parameter;
using numerics::Tensor;
using numerics::Var;

inline constexpr std::size_t kIntervalWidth = 3;
inline constexpr double kLayerNormEpsilon = 1e-5;

struct ItemEncoderDims {
  std::size_t attribute_dim = 0;
  std::size_t context_dim = 3;
  std::size_t id_rows = 2;
  std::size_t d_a = 256;
  std::size_t d_c = 256;
  std::size_t d_f = 256;
  std::size_t d_i = 256;
  std::size_t d_v = 256;
};

struct ItemEncoderParams {
  Parameter W_a, b_a;
  Parameter W_c, b_c;
  Parameter W_f, b_f;
  Parameter id_table;
  Parameter W_v, b_v;
  Parameter ln_gamma, ln_beta;
  Parameter W_Q, b_Q;

  ItemEncoderParams() = default;
  ItemEncoderParams(const ItemEncoderDims& d, std::mt19937_64& rng) {
    using numerics::fan_in_uniform;
    const std::size_t a = d.attribute_dim, c = d.context_dim, q = d.d_v + kIntervalWidth;
    const std::size_t fa = std::max<std::size_t>(a, 1), fc = std::max<std::size_t>(c, 1);
    W_a = Parameter("encoder.W_a", fan_in_uniform({a, d.d_a}, fa, rng));
    b_a = Parameter("encoder.b_a", fan_in_uniform({d.d_a}, fa, rng));
    W_c = Parameter("encoder.W_c", fan_in_uniform({c, d.d_c}, fc, rng));
    b_c = Parameter("encoder.b_c", fan_in_uniform({d.d_c}, fc, rng));
    W_f = Parameter("encoder.W_f", fan_in_uniform({d.d_a + d.d_c, d.d_f}, d.d_a + d.d_c, rng));
    b_f = Parameter("encoder.b_f", fan_in_uniform({d.d_f}, d.d_a + d.d_c, rng));
    id_table = Parameter("encoder.id_table", numerics::normal_init({d.id_rows, d.d_i}, 1.0, rng));
    W_v = Parameter("encoder.W_v", fan_in_uniform({d.d_i + d.d_f, d.d_v}, d.d_i + d.d_f, rng));
    b_v = Parameter("encoder.b_v", fan_in_uniform({d.d_v}, d.d_i + d.d_f, rng));
    ln_gamma = Parameter("encoder.ln_gamma", Tensor({q}, 1.0));
    ln_beta = Parameter("encoder.ln_beta", Tensor({q}));
    W_Q = Parameter("encoder.W_Q", fan_in_uniform({q, d.d_v}, q, rng));
    b_Q = Parameter("encoder.b_Q", fan_in_uniform({d.d_v}, q, rng));
  }

  std::vector<Parameter*> parameters() {
    return {&W_a, &b_a, &W_c, &b_c, &W_f, &b_f, &id_table, &W_v, &b_v, &ln_gamma, &ln_beta, &W_Q, &b_Q};
  }
};

inline Var encode_attributes(const ItemEncoderParams& p, const Var& attrs) { return numerics::linear(attrs, p.W_a, p.b_a); }

inline Var encode_context(const ItemEncoderParams& p, const Var& ctx) { return numerics::linear(ctx, p.W_c, p.b_c); }

inline Var fuse_feature_context(const ItemEncoderParams& p, const Var& a, const Var& c) {
  if (a.value().rows() != c.value().rows()) {
    throw DimensionError("fuse_feature_context: row counts differ (" + std::to_string(a.value().rows()) + " vs " +
                         std::to_string(c.value().rows()) + ")");
  }
  return numerics::linear(numerics::concat_cols(a, c), p.W_f, p.b_f);
}

inline Var embed_and_fuse_ids(const ItemEncoderParams& p, const std::vector<std::size_t>& rows, const Var& f) {
  Var ids = numerics::gather_rows(p.id_table, rows);
  return numerics::linear(numerics::concat_cols(ids, f), p.W_v, p.b_v);
}

// Raw componentwise differences of consecutive (year, month, day) rows. The
// first real event and every padded row get (0, 0, 0).
inline Tensor compute_intervals(const Tensor& calendar, const std::vector<bool>& padding_mask) {
  const std::size_t n = calendar.rows();
  Tensor out({n, kIntervalWidth});
  for (std::size_t i = 1; i < n; ++i) {
    if (padding_mask[i] || padding_mask[i - 1]) continue;
    for (std::size_t k = 0; k < kIntervalWidth; ++k) out(i, k) = calendar(i, k) - calendar(i - 1, k);
  }
  return out;
}

inline Tensor compute_intervals(const Tensor& calendar) {
  return compute_intervals(calendar, std::vector<bool>(calendar.rows(), false));
}

// Rowwise item encoding from per-position attributes, contexts, id rows and
// intervals to Z.
inline Var encode_rows(const ItemEncoderParams& p, const Tensor& attrs, const Tensor& ctx,
                       const std::vector<std::size_t>& rows, const Tensor& intervals, double dropout_rate,
                       bool training, std::mt19937_64& rng) {
  using namespace numerics;
  Var a = encode_attributes(p, constant(attrs));
  Var c = encode_context(p, constant(ctx));
  Var f = dropout(fuse_feature_context(p, a, c), dropout_rate, training, rng);
  Var v = dropout(embed_and_fuse_ids(p, rows, f), dropout_rate, training, rng);
  Var q = layer_norm(gelu(concat_cols(v, constant(intervals))), p.ln_gamma, p.ln_beta, kLayerNormEpsilon);
  return dropout(gelu(linear(q, p.W_Q, p.b_Q)), dropout_rate, training, rng);
}

inline Var encode_sequence(const ItemEncoderParams& p, const data::FixedLengthExample& ex, double dropout_rate,
                           bool training, std::mt19937_64& rng, bool use_intervals = true) {
  Tensor intervals = use_intervals ? compute_intervals(ex.input_calendar, ex.padding_mask)
                                   : Tensor({ex.length(), kIntervalWidth});
  return encode_rows(p, ex.input_attributes, ex.input_contexts, ex.input_rows, intervals, dropout_rate, training,
                     rng);
}

// Each candidate is a singleton sequence, so its interval is (0, 0, 0).
inline Var encode_target_items(const ItemEncoderParams& p, const data::CandidateSet& candidates,
                               double dropout_rate, bool training, std::mt19937_64& rng) {
  return encode_rows(p, candidates.attributes, candidates.contexts, candidates.rows,
                     Tensor({candidates.size(), kIntervalWidth}), dropout_rate, training, rng);
}

}  // namespace convrec::model
