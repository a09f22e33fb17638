#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "convrec/numerics/variable.hpp"

namespace convrec::numerics {

// A learnable tensor plus its Adam state. The value lives in a leaf Var so
// ops can take it directly; its gradient buffer is allocated up front.
struct Parameter {
  std::string name;
  Var var;
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step_count = 0;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor init)
      : name(std::move(name_)),
        var(std::move(init), true),
        first_moment(var.shape()),
        second_moment(var.shape()) {
    var.zero_grad();
  }

  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  Tensor& value() { return var.value(); }
  const Tensor& value() const { return var.value(); }
  const Tensor& grad() const { return var.node()->grad; }
  const Shape& shape() const { return var.shape(); }
  std::size_t size() const { return var.value().size(); }

  void zero_grad() { var.zero_grad(); }

  // Frozen parameters still participate in the forward pass but are never
  // recorded on the tape and never stepped.
  void freeze() {
    trainable = false;
    var.node()->requires_grad = false;
  }

  operator const Var&() const { return var; }
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Uniform in +-1/sqrt(fan_in), the usual default for dense and conv layers.
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace convrec::numerics
