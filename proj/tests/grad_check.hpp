#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pstrp/model.hpp"
#include "pstrp/random.hpp"

namespace pstrp::testing {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  int sampled = 0;
};

/// Central differences (step h) of `loss` at `count` randomly chosen scalars of
/// `params`, compared with the analytic gradient already stored in Tensor::grad.
inline GradCheckResult check_gradients(const std::vector<Tensor*>& params,
                                       const std::function<double()>& loss, int count, Rng& rng,
                                       double h = 1e-5) {
  std::size_t total = 0;
  for (const auto* t : params) total += t->size();
  GradCheckResult r;
  for (int s = 0; s < count; ++s) {
    std::size_t flat = rng.below(total);
    Tensor* t = nullptr;
    for (auto* p : params) {
      if (flat < p->size()) {
        t = p;
        break;
      }
      flat -= p->size();
    }
    const double saved = t->value[flat];
    t->value[flat] = saved + h;
    const double up = loss();
    t->value[flat] = saved - h;
    const double down = loss();
    t->value[flat] = saved;
    const double numeric = (up - down) / (2.0 * h);
    r.max_relative_error = std::max(r.max_relative_error, relative_error(t->grad[flat], numeric));
    ++r.sampled;
  }
  return r;
}

}  // namespace pstrp::testing
