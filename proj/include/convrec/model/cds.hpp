#pragma once

#include <random>
#include <string>
#include <vector>

#include "convrec/model/item_encoder.hpp"
#include "convrec/model/schedule.hpp"
#include "convrec/numerics/ops.hpp"
#include "convrec/numerics/parameter.hpp"

namespace convrec::model {

struct ConvBlockParams {
  Parameter kernels, conv_bias;
  Parameter W_G, b_G;
  Parameter ln_gamma, ln_beta;
  Parameter alpha1, alpha2;

  ConvBlockParams() = default;
  ConvBlockParams(std::size_t index, std::size_t d, std::size_t kernel, std::mt19937_64& rng) {
    using numerics::fan_in_uniform;
    const std::string prefix = "block" + std::to_string(index) + ".";
    kernels = Parameter(prefix + "kernels", fan_in_uniform({d, d, kernel}, d * kernel, rng));
    conv_bias = Parameter(prefix + "conv_bias", fan_in_uniform({d}, d * kernel, rng));
    W_G = Parameter(prefix + "W_G", fan_in_uniform({d, d}, d, rng));
    b_G = Parameter(prefix + "b_G", fan_in_uniform({d}, d, rng));
    ln_gamma = Parameter(prefix + "ln_gamma", Tensor({d}, 1.0));
    ln_beta = Parameter(prefix + "ln_beta", Tensor({d}));
    alpha1 = Parameter(prefix + "alpha1", Tensor({1}, {0.5}));
    alpha2 = Parameter(prefix + "alpha2", Tensor({1}, {0.5}));
  }

  std::size_t kernel_size() const { return kernels.value().dim(2); }

  std::vector<Parameter*> parameters() {
    return {&kernels, &conv_bias, &W_G, &b_G, &ln_gamma, &ln_beta, &alpha1, &alpha2};
  }
};

// Pools x[n x d] along its rows to exactly `target` rows. Non-overlapping
// windows of ceil(n / target) with minimal right padding when that lands on
// `target`; otherwise adaptive windows.
inline Var pool_to_length(const Var& x, std::size_t target) {
  using namespace numerics;
  const std::size_t n = x.value().rows();
  if (n == target) return x;
  Var t = transpose(x);
  const std::size_t window = (n + target - 1) / target;
  const std::size_t pad = minimal_right_pad(n, window, window);
  Var pooled = (n + pad) / window == target ? avg_pool1d(t, window, window, {0, pad}) : adaptive_avg_pool1d(t, target);
  return transpose(pooled);
}

struct BlockOptions {
  double dropout_rate = 0.0;
  bool training = false;
};

// O_j = LayerNorm(G + a1 * Pool(Z) + a2 * Pool(ProgRes)),
// G = GELU(Conv(O_{j-1}) W_G + b_G).
inline Var conv_block(const ConvBlockParams& p, const PlannedLayer& layer, const Var& previous, const Var& z,
                      const Var& prog_res, const BlockOptions& options, std::mt19937_64& rng) {
  using namespace numerics;
  if (previous.value().rows() != layer.input_length || p.kernel_size() != layer.spec.kernel) {
    throw DimensionError("conv_block: input " + shape_string(previous.shape()) + " with kernel " +
                         std::to_string(p.kernel_size()) + " does not match planned layer (length " +
                         std::to_string(layer.input_length) + ", kernel " + std::to_string(layer.spec.kernel) + ")");
  }
  Var conv = conv1d(transpose(previous), p.kernels, p.conv_bias, layer.spec.stride, {0, layer.right_pad});
  Var g = gelu(linear(transpose(conv), p.W_G, p.b_G));
  g = dropout(g, options.dropout_rate, options.training, rng);
  const std::size_t out_len = layer.output_length;
  Var mixed = add(g, scale_by(pool_to_length(z, out_len), p.alpha1));
  mixed = add(mixed, scale_by(pool_to_length(prog_res, out_len), p.alpha2));
  return layer_norm(mixed, p.ln_gamma, p.ln_beta, kLayerNormEpsilon);
}

// Threads the blocks over Z; the progressive residual of block j is the
// output of block j-1 (Z itself for the first block). A final length above one
// is collapsed by averaging.
inline Var cds_forward(const std::vector<ConvBlockParams>& blocks, const ConvSchedule& plan, const Var& z,
                       const BlockOptions& options, std::mt19937_64& rng) {
  if (blocks.size() != plan.layers.size()) {
    throw DimensionError("cds_forward: " + std::to_string(blocks.size()) + " blocks for a " +
                         std::to_string(plan.layers.size()) + "-layer schedule");
  }
  if (z.value().rows() != plan.sequence_length) {
    throw DimensionError("cds_forward: input length " + std::to_string(z.value().rows()) +
                         " but schedule planned for " + std::to_string(plan.sequence_length));
  }
  Var out = z;
  Var prog_res = z;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    out = conv_block(blocks[j], plan.layers[j], out, z, prog_res, options, rng);
    prog_res = out;
  }
  if (out.value().rows() > 1) out = numerics::mean_rows(out);
  return out;
}

}  // namespace convrec::model
