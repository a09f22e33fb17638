#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "convrec/numerics/variable.hpp"

namespace convrec::numerics {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares the tape gradient of a scalar-valued computation with central
// differences over every coordinate of every input. `f` must rebuild the
// graph from the inputs on each call and be deterministic.
inline GradCheckReport grad_check(const std::function<Var()>& f, std::span<const Var> inputs,
                                  double step = 1e-5) {
  std::vector<Var> handles(inputs.begin(), inputs.end());
  for (auto& in : handles) in.zero_grad();
  {
    Var out = f();
    out.backward();
  }
  std::vector<Tensor> analytic;
  analytic.reserve(handles.size());
  for (auto& in : handles) analytic.push_back(in.grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t a = 0; a < handles.size(); ++a) {
    Tensor& value = handles[a].value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double plus = f().value()[0];
      value[i] = saved - step;
      const double minus = f().value()[0];
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double exact = analytic[a][i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double err = std::abs(exact - numeric) / denom;
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_input = a;
        report.worst_index = i;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace convrec::numerics
