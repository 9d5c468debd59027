#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "dvk/tensor.hpp"

namespace dvk {

// In-place radix-2 complex FFT; n must be a power of two. The inverse
// transform includes the 1/n normalization.
void fft_inplace(std::complex<double>* a, std::size_t n, bool inverse);

// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

// 3D FFT over a dense [d0, d1, d2] complex grid (all dims powers of two).
void fft3_inplace(std::vector<std::complex<double>>& a, std::size_t d0, std::size_t d1,
                  std::size_t d2, bool inverse);

}  // namespace dvk
