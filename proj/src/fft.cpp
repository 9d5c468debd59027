#include "dvk/fft.hpp"

#include <cmath>

namespace dvk {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::complex<double>* a, std::size_t n, bool inverse) {
  if (n == 0 || (n & (n - 1)) != 0) throw ValueError("fft: length must be a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * M_PI / static_cast<double>(len);
    for (std::size_t base = 0; base < n; base += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // per-index twiddle from polar form; accuracy over speed
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> u = a[base + k];
        const std::complex<double> v = a[base + k + len / 2] * w;
        a[base + k] = u + v;
        a[base + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) a[i] *= inv_n;
  }
}

void fft3_inplace(std::vector<std::complex<double>>& a, std::size_t d0, std::size_t d1,
                  std::size_t d2, bool inverse) {
  if (a.size() != d0 * d1 * d2) throw ValueError("fft3: size mismatch");

  // axis 2: contiguous lines
  for (std::size_t i = 0; i < d0 * d1; ++i) fft_inplace(a.data() + i * d2, d2, inverse);

  // axis 1: stride d2 within each d0-slab
  std::vector<std::complex<double>> line(std::max(d0, d1));
  for (std::size_t i0 = 0; i0 < d0; ++i0)
    for (std::size_t i2 = 0; i2 < d2; ++i2) {
      for (std::size_t i1 = 0; i1 < d1; ++i1) line[i1] = a[(i0 * d1 + i1) * d2 + i2];
      fft_inplace(line.data(), d1, inverse);
      for (std::size_t i1 = 0; i1 < d1; ++i1) a[(i0 * d1 + i1) * d2 + i2] = line[i1];
    }

  // axis 0: stride d1*d2
  for (std::size_t i1 = 0; i1 < d1; ++i1)
    for (std::size_t i2 = 0; i2 < d2; ++i2) {
      for (std::size_t i0 = 0; i0 < d0; ++i0) line[i0] = a[(i0 * d1 + i1) * d2 + i2];
      fft_inplace(line.data(), d0, inverse);
      for (std::size_t i0 = 0; i0 < d0; ++i0) a[(i0 * d1 + i1) * d2 + i2] = line[i0];
    }
}

}  // namespace dvk
