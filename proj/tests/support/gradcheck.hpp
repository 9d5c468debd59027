#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "dvk/rng.hpp"
#include "dvk/tensor.hpp"

namespace dvk::testing {

struct GradCheckResult {
  double max_rel = 0.0;
  std::size_t worst_index = 0;
};

// Central finite differences over a flat slot array against an analytic
// gradient. `loss` must recompute the scalar objective from current slot
// values on every call. The relative error uses a floor so that entries with
// near-zero gradient are compared absolutely at the finite-difference noise
// scale.
inline GradCheckResult finite_diff_check(const std::function<double()>& loss, double* slots,
                                         std::size_t n, const double* analytic,
                                         double step = 1e-5, double floor = 1e-2) {
  GradCheckResult r;
  for (std::size_t i = 0; i < n; ++i) {
    const double save = slots[i];
    slots[i] = save + step;
    const double lp = loss();
    slots[i] = save - step;
    const double lm = loss();
    slots[i] = save;
    const double fd = (lp - lm) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), floor});
    const double rel = std::abs(fd - analytic[i]) / denom;
    if (rel > r.max_rel) {
      r.max_rel = rel;
      r.worst_index = i;
    }
  }
  return r;
}

// Fixed random projection <G, y>; turns a tensor-valued map into the scalar
// objective used for the checks above.
inline Tensor random_projection(const Shape& shape, Rng& rng) {
  Tensor g(shape);
  for (double& v : g.data()) v = rng.uniform(-1.0, 1.0);
  return g;
}

inline double inner(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace dvk::testing
