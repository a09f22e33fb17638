#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "convrec/error.hpp"

namespace convrec::model {

struct LayerSpec {
  std::size_t kernel = 1;
  std::size_t stride = 1;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct PlannedLayer {
  LayerSpec spec;
  std::size_t input_length = 0;
  std::size_t right_pad = 0;
  std::size_t output_length = 0;
};

struct ConvSchedule {
  std::size_t sequence_length = 0;
  std::vector<PlannedLayer> layers;

  std::size_t final_length() const { return layers.empty() ? sequence_length : layers.back().output_length; }
  std::vector<std::size_t> lengths() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers) out.push_back(l.output_length);
    return out;
  }
  std::vector<std::size_t> paddings() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers) out.push_back(l.right_pad);
    return out;
  }
};

inline std::string schedule_string(const std::vector<LayerSpec>& layers) {
  std::string s = "[";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += ",";
    s += "[" + std::to_string(layers[i].kernel) + "," + std::to_string(layers[i].stride) + "]";
  }
  return s + "]";
}

// Smallest right pad P with L + P >= K and (L + P - K) divisible by S.
inline std::size_t minimal_right_pad(std::size_t length, std::size_t kernel, std::size_t stride) {
  std::size_t pad = length >= kernel ? 0 : kernel - length;
  const std::size_t rem = (length + pad - kernel) % stride;
  if (rem != 0) pad += stride - rem;
  return pad;
}

inline ConvSchedule plan_schedule(std::size_t length, const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ConfigError("convolution schedule must contain at least one layer");
  if (length == 0) throw ConfigError("sequence length must be at least 1");
  ConvSchedule plan;
  plan.sequence_length = length;
  std::size_t current = length;
  for (const auto& spec : layers) {
    if (spec.kernel == 0 || spec.stride == 0) {
      throw ConfigError("schedule " + schedule_string(layers) + ": kernel and stride must be positive");
    }
    PlannedLayer p;
    p.spec = spec;
    p.input_length = current;
    p.right_pad = minimal_right_pad(current, spec.kernel, spec.stride);
    p.output_length = (current + p.right_pad - spec.kernel) / spec.stride + 1;
    current = p.output_length;
    plan.layers.push_back(p);
  }
  return plan;
}

// Non-overlapping (2,2) layers until at most 7 positions remain, then one
// layer spanning the remainder.
inline std::vector<LayerSpec> schedule_family(std::size_t length) {
  std::vector<LayerSpec> layers;
  std::size_t current = length;
  while (current > 7) {
    layers.push_back({2, 2});
    current = (current + 1) / 2;
  }
  if (current > 1 || layers.empty()) layers.push_back({current, current});
  return layers;
}

// Multiply-adds of the conv and projection ops: sum_j L_j * d^2 * (K_j + 1).
inline std::uint64_t count_flops(const ConvSchedule& plan, std::size_t d) {
  std::uint64_t total = 0;
  const auto dd = static_cast<std::uint64_t>(d) * d;
  for (const auto& l : plan.layers) total += l.output_length * dd * (l.spec.kernel + 1);
  return total;
}

}  // namespace convrec::model
