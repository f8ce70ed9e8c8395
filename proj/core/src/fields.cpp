#include "graphpde/fields.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "graphpde/fft.hpp"

namespace gpde {

double grf_mode_variance(const GrfConfig& cfg, int kx, int ky) {
  const double k2 = 4.0 * M_PI * M_PI * double(kx * kx + ky * ky);
  return cfg.amplitude * cfg.amplitude *
         std::pow(k2 + cfg.mass * cfg.mass, -double(cfg.power));
}

GridField sample_grf(const GrfConfig& cfg, Rng& rng) {
  const int r = cfg.resolution;
  if (r < 4 || (r & (r - 1)) != 0)
    throw std::invalid_argument("sample_grf: resolution must be a power of two >= 4");

  // Spectrum under the DFT convention g(r) = sum_m spec[m] e^{2 pi i m.r}.
  // A cosine/sine pair with coefficients a, b ~ N(0, lambda_k) maps to
  // spec[k] = (a - i b) / sqrt(2) and spec[-k] = conj(spec[k]); the DC basis
  // function is 1 itself. Wavenumbers stop at r/2 - 1 (no Nyquist content).
  std::vector<std::complex<double>> spec(size_t(r) * r, {0.0, 0.0});
  auto slot = [r](int kx, int ky) {
    const int mx = (kx % r + r) % r;
    const int my = (ky % r + r) % r;
    return size_t(my) * r + mx;
  };

  spec[slot(0, 0)] = std::sqrt(grf_mode_variance(cfg, 0, 0)) * rng.normal();
  const int kmax = r / 2 - 1;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int ky = 0; ky <= kmax; ++ky)
    for (int kx = -kmax; kx <= kmax; ++kx) {
      if (ky == 0 && kx <= 0) continue;  // half-space: ky > 0, or ky == 0 & kx > 0
      const double std_k = std::sqrt(grf_mode_variance(cfg, kx, ky));
      const double a = std_k * rng.normal();
      const double b = std_k * rng.normal();
      const std::complex<double> c(a * inv_sqrt2, -b * inv_sqrt2);
      spec[slot(kx, ky)] = c;
      spec[slot(-kx, -ky)] = std::conj(c);
    }

  // fft2_inplace(inverse) divides by r*r; the synthesis sum has no 1/N, so
  // scale back up.
  fft2_inplace(spec, r, r, /*inverse=*/true);
  GridField out;
  out.r = r;
  out.v.resize(size_t(r) * r);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = float(spec[i].real() * double(r) * double(r));
  return out;
}

GridField extend_nearest(const GridField& f,
                         const std::vector<uint8_t>& inside) {
  const int r = f.r;
  if (inside.size() != f.v.size())
    throw std::invalid_argument("extend_nearest: mask/field size mismatch");
  std::vector<int> in_cells;
  for (size_t i = 0; i < inside.size(); ++i)
    if (inside[i]) in_cells.push_back(int(i));
  if (in_cells.empty())
    throw std::invalid_argument("extend_nearest: empty subdomain");

  GridField out = f;
  for (int iy = 0; iy < r; ++iy)
    for (int ix = 0; ix < r; ++ix) {
      const int idx = iy * r + ix;
      if (inside[size_t(idx)]) continue;
      long best_d = -1;
      int best = -1;
      for (int j : in_cells) {  // ascending row-major: first win breaks ties
        const long dx = long(j % r) - ix;
        const long dy = long(j / r) - iy;
        const long d = dx * dx + dy * dy;
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = j;
        }
      }
      out.v[size_t(idx)] = f.v[size_t(best)];
    }
  return out;
}

}  // namespace gpde
