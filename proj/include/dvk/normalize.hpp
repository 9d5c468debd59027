#pragma once

#include "dvk/tensor.hpp"

namespace dvk {

// Min-max rescaling state. Carries everything needed for an exact inverse.
struct NormalizationParams {
  double data_min = 0.0;
  double data_max = 1.0;
  double target_low = 0.0;   // a
  double target_high = 1.0;  // b

  void validate() const;
};

// Maps x linearly so that min(x) -> a and max(x) -> b. Constant tensors are
// rejected: inventing contrast where there is none would corrupt the data.
std::pair<Tensor, NormalizationParams> minmax_normalize(const Tensor& x, double a, double b);

// Applies already-computed parameters (e.g. a dataset split's statistics) to
// any tensor. Values outside [data_min, data_max] map outside [a, b].
Tensor normalize_with(const Tensor& x, const NormalizationParams& p);

// Exact inverse of normalize_with / minmax_normalize.
Tensor denormalize(const Tensor& y, const NormalizationParams& p);

}  // namespace dvk
