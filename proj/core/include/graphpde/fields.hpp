#pragma once

#include <cstdint>
#include <vector>

#include "graphpde/grid.hpp"
#include "graphpde/rng.hpp"

namespace gpde {

// Gaussian random field on the periodic unit square with covariance
// amplitude^2 (-Laplacian + mass^2 I)^(-power), sampled spectrally under the
// orthonormal real Fourier basis {1, sqrt(2) cos(2 pi k.r), sqrt(2) sin(...)}.
struct GrfConfig {
  double amplitude = 50.0;
  double mass = 5.0;
  int power = 3;
  int resolution = 32;  // power of two
};

GridField sample_grf(const GrfConfig& cfg, Rng& rng);

// Eigenvalue of the covariance operator on the (kx, ky) cosine/sine pair.
double grf_mode_variance(const GrfConfig& cfg, int kx, int ky);

// Extend a field defined on a subdomain to the whole grid: every cell outside
// the mask takes the value of the nearest inside cell (Euclidean distance on
// cell centers, ties broken by the lowest row-major index). `inside` is an
// R*R row-major 0/1 mask. Throws std::invalid_argument when the mask is empty
// or the sizes disagree.
GridField extend_nearest(const GridField& f, const std::vector<uint8_t>& inside);

}  // namespace gpde
