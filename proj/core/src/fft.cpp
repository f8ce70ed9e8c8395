#include "graphpde/fft.hpp"

#include <cmath>

namespace gpde {

void fft_inplace(std::complex<double>* a, int n, bool inverse) {
  // Bit-reversal permutation.
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= inv;
  }
}

void fft2_inplace(std::vector<std::complex<double>>& a, int rows, int cols,
                  bool inverse) {
  for (int r = 0; r < rows; ++r) fft_inplace(a.data() + size_t(r) * cols, cols, inverse);
  std::vector<std::complex<double>> col(static_cast<size_t>(rows));
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) col[size_t(r)] = a[size_t(r) * cols + c];
    fft_inplace(col.data(), rows, inverse);
    for (int r = 0; r < rows; ++r) a[size_t(r) * cols + c] = col[size_t(r)];
  }
}

}  // namespace gpde
