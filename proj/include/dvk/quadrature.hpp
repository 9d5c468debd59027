#pragma once

#include <functional>

#include "dvk/tensor.hpp"

namespace dvk {

// Finite convolution (f (*) g)(x) = integral_0^x f(tau) g(x - tau) dtau,
// evaluated with the composite Simpson rule over `steps` subintervals.
// `steps` must be even and >= 2; x must be >= 0 (x == 0 yields 0).
double quad_convolve(const std::function<double(double)>& f,
                     const std::function<double(double)>& g, double x, int steps);

}  // namespace dvk
