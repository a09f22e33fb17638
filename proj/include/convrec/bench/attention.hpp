#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "convrec/error.hpp"
#include "convrec/numerics/ops.hpp"
#include "convrec/numerics/parameter.hpp"

// Minimal multi-head self-attention encoder used as the quadratic reference in
// the scaling study: one block, Q/K/V/output projections, mean-pooled.
namespace convrec::bench {

using numerics::Parameter;
using numerics::Tensor;
using numerics::Var;

struct AttentionParams {
  std::size_t heads = 4;
  Parameter W_q, b_q, W_k, b_k, W_v, b_v, W_o, b_o;

  AttentionParams() = default;
  AttentionParams(std::size_t d, std::size_t heads_, std::mt19937_64& rng) : heads(heads_) {
    if (heads == 0 || d % heads != 0) {
      throw ConfigError("attention: width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    }
    using numerics::fan_in_uniform;
    W_q = Parameter("attn.W_q", fan_in_uniform({d, d}, d, rng));
    b_q = Parameter("attn.b_q", fan_in_uniform({d}, d, rng));
    W_k = Parameter("attn.W_k", fan_in_uniform({d, d}, d, rng));
    b_k = Parameter("attn.b_k", fan_in_uniform({d}, d, rng));
    W_v = Parameter("attn.W_v", fan_in_uniform({d, d}, d, rng));
    b_v = Parameter("attn.b_v", fan_in_uniform({d}, d, rng));
    W_o = Parameter("attn.W_o", fan_in_uniform({d, d}, d, rng));
    b_o = Parameter("attn.b_o", fan_in_uniform({d}, d, rng));
  }

  std::size_t width() const { return W_q.value().rows(); }

  std::vector<Parameter*> parameters() { return {&W_q, &b_q, &W_k, &b_k, &W_v, &b_v, &W_o, &b_o}; }
};

// Per-head L x L attention weights, softmax(Q_h K_h^T / sqrt(d_h)).
inline std::vector<Var> attention_weights(const AttentionParams& p, const Var& z) {
  using namespace numerics;
  if (z.value().rank() != 2 || z.value().cols() != p.width()) {
    throw DimensionError("attention: input " + shape_string(z.shape()) + " does not match width " +
                         std::to_string(p.width()));
  }
  const std::size_t dh = p.width() / p.heads;
  Var q = linear(z, p.W_q, p.b_q);
  Var k = linear(z, p.W_k, p.b_k);
  std::vector<Var> out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    out.push_back(softmax_rows(matmul_nt(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                         1.0 / std::sqrt(static_cast<double>(dh)))));
  }
  return out;
}

inline Var attention_encoder_forward(const AttentionParams& p, const Var& z) {
  using namespace numerics;
  const std::size_t dh = p.width() / p.heads;
  std::vector<Var> weights = attention_weights(p, z);
  Var v = linear(z, p.W_v, p.b_v);
  Var heads = matmul(weights[0], slice_cols(v, 0, dh));
  for (std::size_t h = 1; h < p.heads; ++h) heads = concat_cols(heads, matmul(weights[h], slice_cols(v, h * dh, dh)));
  return mean_rows(linear(heads, p.W_o, p.b_o));
}

// Multiply-adds of Q K^T and A V summed over heads: 2 * L^2 * d.
inline std::uint64_t attention_score_macs(std::size_t length, std::size_t d) {
  const auto L = static_cast<std::uint64_t>(length);
  return 2 * L * L * d;
}

// Score term plus the four L x d x d projections.
inline std::uint64_t attention_macs(std::size_t length, std::size_t d) {
  const auto L = static_cast<std::uint64_t>(length);
  return attention_score_macs(length, d) + 4 * L * d * d;
}

}  // namespace convrec::bench
