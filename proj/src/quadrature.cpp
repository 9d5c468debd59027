#include "dvk/quadrature.hpp"

#include <cmath>

namespace dvk {

double quad_convolve(const std::function<double(double)>& f,
                     const std::function<double(double)>& g, double x, int steps) {
  if (steps < 2 || steps % 2 != 0)
    throw ValueError("quad_convolve: steps must be even and >= 2, got " + std::to_string(steps));
  if (!(x >= 0.0)) throw ValueError("quad_convolve: x must be >= 0");
  if (x == 0.0) return 0.0;

  const double h = x / steps;
  auto integrand = [&](double tau) {
    const double v = f(tau) * g(x - tau);
    if (!std::isfinite(v))
      throw NumericError("quad_convolve: non-finite integrand at tau = " + std::to_string(tau));
    return v;
  };

  double acc = integrand(0.0) + integrand(x);
  for (int i = 1; i < steps; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * integrand(i * h);
  return acc * h / 3.0;
}

}  // namespace dvk
