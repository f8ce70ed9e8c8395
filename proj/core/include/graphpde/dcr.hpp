#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "graphpde/dsl.hpp"
#include "graphpde/fields.hpp"
#include "graphpde/grid.hpp"
#include "graphpde/rng.hpp"

namespace gpde {

// ---------------------------------------------------------------------------
// Random diffusion-convection-reaction problems on the periodic unit square:
//
//   u_t + L u + f_0(u) + s(r) + d/dx f_1(u) + d/dy f_2(u) = 0,  u(0, r) = g(r)
//
// with polynomial f_i (optionally plus sinusoidal terms), scalar diffusivity,
// and a zero/one/scalar/random-field source. Instances carry both the
// symbolic system (specific form, for the graph pipeline) and the raw
// numbers (for the solver).
// ---------------------------------------------------------------------------

struct DcrFamilyConfig {
  int max_sin_terms = 0;  // J: total sinusoidal flux/reaction terms allowed
  // Weights for the source draw {zero, one, scalar, field}.
  std::array<double, 4> source_weights{5.0, 1.0, 5.0, 5.0};
  double zero_diffusion_prob = 0.2;  // taken only when f_1 and f_2 are linear
  double log10_a_min = -3.0;
  double log10_a_max = -2.0;
  int resolution = 32;
  GrfConfig grf;  // amplitude/mass/power; resolution follows `resolution`

  // Restrictions used by the training presets.
  bool linear_fluxes_only = false;  // degree-1 f_1, f_2; no sinusoidal terms
  bool allow_reaction = true;       // f_0 != 0 permitted
  bool allow_source = true;         // s(r) != 0 permitted
};

// Training family: advection-diffusion with optional source fields (linear
// fluxes, no reaction), the distribution behind the end-to-end runs.
DcrFamilyConfig advection_diffusion_family(bool with_source);

// One sinusoidal flux term c0 * h(c1 u + c2 u^2), h in {sin, cos}.
struct SinTerm {
  int target = 0;  // which f_i it belongs to
  bool is_cos = false;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

struct DcrInstance {
  // Polynomial parts: f_i(u) = sum_k c[i][k-1] u^k, k = 1..3.
  // i = 0: reaction, 1: x-flux, 2: y-flux.
  std::array<std::array<double, 3>, 3> c{};
  std::vector<SinTerm> sin_terms;

  // Diffusion L u: 0 none, 1 non-divergence -a lap(u),
  // 2 factored -sqrt(a) div(sqrt(a) grad u), 3 divergence -div(a grad u).
  // All coincide numerically for scalar a; the graphs differ.
  int diffusion_form = 0;
  double a = 0.0;

  int source_kind = 0;        // 0 zero, 1 one, 2 scalar, 3 field
  double source_value = 0.0;  // kinds 1 and 2
  GridField source;           // kind 3
  GridField init;             // initial condition g(r)

  PdeSystem system;                         // specific form
  std::map<std::string, GridField> fields;  // bindings ("g", optionally "s")
};

// Fill `system` and `fields` from the numeric members (raw DSL text is built,
// parsed, and simplified, so the stored system is canonical).
void build_system(DcrInstance& inst);

DcrInstance sample_dcr_instance(const DcrFamilyConfig& family, Rng& rng);

// ---------------------------------------------------------------------------
// Pseudo-spectral solver (periodic square, single variable, polynomial
// fluxes): spectral derivatives with 2/3-rule dealiasing of the flux
// products, explicit RK4 with dt = min(0.25 dx / max|f'|, 0.2 dx^2 / (4a)),
// re-evaluated every step and clipped to land on snapshot times.
// ---------------------------------------------------------------------------

struct SolveResult {
  bool discarded = false;            // NaN or max|u| > 10 encountered
  std::vector<double> times;         // nt+1 uniform times on [0, 1]
  std::vector<GridField> frames;     // solution at each time
};

// `dt_scale` shrinks every step (used by the convergence oracle). Throws
// std::invalid_argument on structure the solver does not cover (sinusoidal
// terms, resolution mismatch, non-positive nt).
SolveResult solve_dcr(const DcrInstance& inst, int R, int nt,
                      double dt_scale = 1.0);

}  // namespace gpde
