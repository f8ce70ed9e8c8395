#pragma once

#include <complex>
#include <vector>

namespace gpde {

// In-place radix-2 complex FFT; size must be a power of two.
// inverse=true applies the conjugate transform and divides by n.
void fft_inplace(std::complex<double>* a, int n, bool inverse);

// 2D transform of a rows x cols row-major array (both powers of two).
void fft2_inplace(std::vector<std::complex<double>>& a, int rows, int cols,
                  bool inverse);

}  // namespace gpde
