#include "dvk/normalize.hpp"

#include <algorithm>
#include <cmath>

namespace dvk {

void NormalizationParams::validate() const {
  if (!(data_min <= data_max))
    throw ValueError("normalization params: data_min > data_max");
  if (!(target_low < target_high))
    throw ValueError("normalization params: target interval [a, b] requires a < b");
  if (!std::isfinite(data_min) || !std::isfinite(data_max) || !std::isfinite(target_low) ||
      !std::isfinite(target_high))
    throw ValueError("normalization params: non-finite field");
}

std::pair<Tensor, NormalizationParams> minmax_normalize(const Tensor& x, double a, double b) {
  if (x.size() == 0) throw ValueError("minmax_normalize: empty tensor");
  if (!(a < b)) throw ValueError("minmax_normalize: requires a < b");
  x.ensure_finite("minmax_normalize input");

  NormalizationParams p;
  p.data_min = x.min();
  p.data_max = x.max();
  p.target_low = a;
  p.target_high = b;
  if (p.data_min == p.data_max)
    throw ValueError("minmax_normalize: degenerate input, min == max == " +
                     std::to_string(p.data_min));
  return {normalize_with(x, p), p};
}

Tensor normalize_with(const Tensor& x, const NormalizationParams& p) {
  p.validate();
  if (p.data_min == p.data_max)
    throw ValueError("normalize_with: degenerate parameters, min == max");
  // Blended form: t hits 0 and 1 exactly at the recorded extremes, so min
  // maps to a and max maps to b without rounding residue. Values inside the
  // recorded range are clamped against 1-ulp overshoot.
  const double inv_range = 1.0 / (p.data_max - p.data_min);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - p.data_min) * inv_range;
    double y = p.target_low * (1.0 - t) + p.target_high * t;
    if (x[i] >= p.data_min && x[i] <= p.data_max)
      y = std::min(std::max(y, p.target_low), p.target_high);
    out[i] = y;
  }
  out.ensure_finite("normalize_with output");
  return out;
}

Tensor denormalize(const Tensor& y, const NormalizationParams& p) {
  p.validate();
  const double inv_span = 1.0 / (p.target_high - p.target_low);
  Tensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = (y[i] - p.target_low) * inv_span;
    out[i] = p.data_min * (1.0 - u) + p.data_max * u;
  }
  out.ensure_finite("denormalize output");
  return out;
}

}  // namespace dvk
