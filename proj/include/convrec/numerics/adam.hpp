#pragma once

#include <cmath>
#include <span>
#include <string>

#include "convrec/error.hpp"
#include "convrec/numerics/parameter.hpp"

namespace convrec::numerics {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay:
//   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
// Gradients are validated before any parameter is touched.
inline void adam_step(std::span<Parameter* const> params, const AdamOptions& opt) {
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad().size() != p->size()) {
      throw NumericError("adam_step: gradient for parameter '" + p->name + "' is not populated");
    }
    for (double g : p->grad().data()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    double* w = p->value().ptr();
    double* m = p->first_moment.ptr();
    double* v = p->second_moment.ptr();
    const double* g = p->grad().ptr();
    for (std::size_t i = 0; i < p->size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= opt.learning_rate * (mhat / (std::sqrt(vhat) + opt.epsilon) + opt.weight_decay * w[i]);
    }
  }
}

}  // namespace convrec::numerics
