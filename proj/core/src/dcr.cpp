#include "graphpde/dcr.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphpde/fft.hpp"
#include "graphpde/graph.hpp"

namespace gpde {

DcrFamilyConfig advection_diffusion_family(bool with_source) {
  DcrFamilyConfig f;
  f.linear_fluxes_only = true;
  f.allow_reaction = false;
  f.allow_source = with_source;
  return f;
}

// ---------------------------------------------------------------------------
// Instance -> DSL text
// ---------------------------------------------------------------------------

namespace {

std::string lit(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Term {
  bool neg = false;
  std::string text;
};

// "t1 + t2 - t3" with a leading "-" when the first term is negative.
std::string join_terms(const std::vector<Term>& terms) {
  std::string out;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (i == 0)
      out += terms[i].neg ? "-" : "";
    else
      out += terms[i].neg ? " - " : " + ";
    out += terms[i].text;
  }
  return out;
}

// c * u^k as a signed term; k in 1..3.
Term poly_term(double c, int k) {
  static const char* pow_text[] = {"u", "u^2", "u^2*u"};
  return {c < 0, lit(std::abs(c)) + "*" + pow_text[k - 1]};
}

// Polynomial-plus-sinusoidal body of f_i; empty when f_i == 0.
std::vector<Term> f_terms(const DcrInstance& inst, int i) {
  std::vector<Term> out;
  for (int k = 1; k <= 3; ++k)
    if (inst.c[size_t(i)][size_t(k - 1)] != 0.0)
      out.push_back(poly_term(inst.c[size_t(i)][size_t(k - 1)], k));
  for (const SinTerm& s : inst.sin_terms) {
    if (s.target != i || s.c0 == 0.0) continue;
    std::vector<Term> inner;
    if (s.c1 != 0.0) inner.push_back(poly_term(s.c1, 1));
    if (s.c2 != 0.0) inner.push_back(poly_term(s.c2, 2));
    const std::string arg = inner.empty() ? "0" : join_terms(inner);
    out.push_back({s.c0 < 0, lit(std::abs(s.c0)) + "*" +
                                 (s.is_cos ? "cos(" : "sin(") + arg + ")"});
  }
  return out;
}

}  // namespace

void build_system(DcrInstance& inst) {
  std::string src = "var u\nfield g initial from \"g\"\n";
  if (inst.source_kind == 3) src += "field s source from \"s\"\n";

  std::vector<Term> eq;
  eq.push_back({false, "dt(u)"});
  if (inst.diffusion_form != 0 && inst.a > 0.0) {
    const std::string A = lit(inst.a);
    const std::string S = lit(std::sqrt(inst.a));
    switch (inst.diffusion_form) {
      case 1:
        eq.push_back({true, A + "*(dx(dx(u)) + dy(dy(u)))"});
        break;
      case 2:
        eq.push_back(
            {true, S + "*(dx(" + S + "*dx(u)) + dy(" + S + "*dy(u)))"});
        break;
      case 3:
        eq.push_back({true, "(dx(" + A + "*dx(u)) + dy(" + A + "*dy(u)))"});
        break;
      default:
        throw std::invalid_argument("build_system: bad diffusion form");
    }
  }
  for (const Term& t : f_terms(inst, 0)) eq.push_back(t);
  if (inst.source_kind == 1)
    eq.push_back({false, "1"});
  else if (inst.source_kind == 2 && inst.source_value != 0.0)
    eq.push_back({inst.source_value < 0, lit(std::abs(inst.source_value))});
  else if (inst.source_kind == 3)
    eq.push_back({false, "s"});
  for (int i = 1; i <= 2; ++i) {
    const std::vector<Term> body = f_terms(inst, i);
    if (body.empty()) continue;
    eq.push_back({false, std::string(i == 1 ? "dx(" : "dy(") +
                             join_terms(body) + ")"});
  }

  src += join_terms(eq) + " = 0\nic u = g\n";
  inst.system = simplify_to_specific_form(parse_pde(src));
  inst.fields.clear();
  inst.fields["g"] = inst.init;
  if (inst.source_kind == 3) inst.fields["s"] = inst.source;
}

// ---------------------------------------------------------------------------
// Family sampling
// ---------------------------------------------------------------------------

namespace {
// zero, one, or U([-1, 1]), equiprobable.
double coeff_draw(Rng& rng) {
  switch (rng.below(3)) {
    case 0: return 0.0;
    case 1: return 1.0;
    default: return rng.uniform(-1.0, 1.0);
  }
}
}  // namespace

DcrInstance sample_dcr_instance(const DcrFamilyConfig& family, Rng& rng) {
  DcrInstance inst;
  GrfConfig grf = family.grf;
  grf.resolution = family.resolution;

  for (int i = 0; i < 3; ++i)
    for (int k = 1; k <= 3; ++k) {
      if (i == 0 && !family.allow_reaction) continue;
      if (i >= 1 && k >= 2 && family.linear_fluxes_only) continue;
      inst.c[size_t(i)][size_t(k - 1)] = coeff_draw(rng);
    }

  if (family.max_sin_terms > 0 && !family.linear_fluxes_only) {
    const int total = int(rng.below(uint64_t(family.max_sin_terms) + 1));
    for (int j = 0; j < total; ++j) {
      SinTerm s;
      s.target = family.allow_reaction ? int(rng.below(3))
                                       : 1 + int(rng.below(2));
      s.is_cos = rng.below(2) == 1;
      s.c0 = coeff_draw(rng);
      s.c1 = coeff_draw(rng);
      s.c2 = coeff_draw(rng);
      inst.sin_terms.push_back(s);
    }
  }

  bool linear_fluxes = true;
  for (int i = 1; i <= 2; ++i)
    for (int k = 2; k <= 3; ++k)
      if (inst.c[size_t(i)][size_t(k - 1)] != 0.0) linear_fluxes = false;
  for (const SinTerm& s : inst.sin_terms)
    if (s.target >= 1 && s.c0 != 0.0) linear_fluxes = false;

  if (linear_fluxes && rng.uniform() < family.zero_diffusion_prob) {
    inst.diffusion_form = 0;
    inst.a = 0.0;
  } else {
    inst.diffusion_form = 1 + int(rng.below(3));
    inst.a = std::pow(10.0, rng.uniform(family.log10_a_min, family.log10_a_max));
  }

  if (family.allow_source) {
    inst.source_kind = rng.choice(std::vector<double>(
        family.source_weights.begin(), family.source_weights.end()));
    if (inst.source_kind == 1) inst.source_value = 1.0;
    if (inst.source_kind == 2) inst.source_value = rng.uniform(-1.0, 1.0);
    if (inst.source_kind == 3) inst.source = sample_grf(grf, rng);
  }
  inst.init = sample_grf(grf, rng);

  build_system(inst);
  return inst;
}

// ---------------------------------------------------------------------------
// Pseudo-spectral RK4 solver
// ---------------------------------------------------------------------------

namespace {

struct Spectral {
  int R;
  double a;
  std::array<std::array<double, 3>, 3> c;
  bool has_flux[2];  // f_1, f_2
  bool has_reaction;
  std::vector<double> source;  // physical, length R*R (possibly all equal)

  std::vector<double> wave;      // 2 pi k (first-derivative multiplier)
  std::vector<double> lap;       // (2 pi k)^2 per index
  std::vector<uint8_t> keep;     // 2/3-rule mask per index
  mutable std::vector<std::complex<double>> w1, w2, wu, acc;

  explicit Spectral(const DcrInstance& inst, int R_) : R(R_), a(inst.a) {
    c = inst.c;
    has_reaction = c[0][0] != 0 || c[0][1] != 0 || c[0][2] != 0;
    for (int i = 0; i < 2; ++i) {
      const auto& ci = c[size_t(i) + 1];
      has_flux[i] = ci[0] != 0 || ci[1] != 0 || ci[2] != 0;
    }
    source.assign(size_t(R) * R, 0.0);
    if (inst.source_kind == 1 || inst.source_kind == 2)
      for (auto& v : source) v = inst.source_value;
    if (inst.source_kind == 3)
      for (size_t i = 0; i < source.size(); ++i)
        source[i] = double(inst.source.v[i]);

    wave.resize(size_t(R));
    lap.resize(size_t(R));
    keep.resize(size_t(R));
    for (int m = 0; m < R; ++m) {
      const int s = m < R / 2 ? m : m - R;  // m == R/2 -> -R/2 (Nyquist)
      wave[size_t(m)] = m == R / 2 ? 0.0 : 2.0 * M_PI * double(s);
      lap[size_t(m)] = (2.0 * M_PI * double(s)) * (2.0 * M_PI * double(s));
      keep[size_t(m)] = uint8_t(std::abs(s) <= R / 3);
    }
    const size_t n = size_t(R) * R;
    w1.resize(n);
    w2.resize(n);
    wu.resize(n);
    acc.resize(n);
  }

  static double poly(const std::array<double, 3>& ci, double u) {
    return u * (ci[0] + u * (ci[1] + u * ci[2]));
  }
  static double dpoly(const std::array<double, 3>& ci, double u) {
    return ci[0] + u * (2.0 * ci[1] + u * 3.0 * ci[2]);
  }

  // du/dt = a lap(u) - f0(u) - s - d/dx f1(u) - d/dy f2(u)
  void rhs(const std::vector<double>& u, std::vector<double>& out) const {
    const size_t n = size_t(R) * R;
    for (size_t i = 0; i < n; ++i) acc[i] = {0.0, 0.0};
    const bool spectral_work = a > 0.0 || has_flux[0] || has_flux[1];

    if (a > 0.0) {
      for (size_t i = 0; i < n; ++i) wu[i] = {u[i], 0.0};
      fft2_inplace(wu, R, R, false);
      for (int iy = 0; iy < R; ++iy)
        for (int ix = 0; ix < R; ++ix) {
          const size_t i = size_t(iy) * R + ix;
          acc[i] -= a * (lap[size_t(ix)] + lap[size_t(iy)]) * wu[i];
        }
    }
    for (int f = 0; f < 2; ++f) {
      if (!has_flux[f]) continue;
      auto& w = f == 0 ? w1 : w2;
      const auto& ci = c[size_t(f) + 1];
      for (size_t i = 0; i < n; ++i) w[i] = {poly(ci, u[i]), 0.0};
      fft2_inplace(w, R, R, false);
      for (int iy = 0; iy < R; ++iy)
        for (int ix = 0; ix < R; ++ix) {
          const size_t i = size_t(iy) * R + ix;
          if (!(keep[size_t(ix)] && keep[size_t(iy)])) continue;
          const double k = f == 0 ? wave[size_t(ix)] : wave[size_t(iy)];
          // -(i k) * w: multiply by k, rotate by -i.
          const std::complex<double> v = w[i] * k;
          acc[i] += std::complex<double>(v.imag(), -v.real());
        }
    }

    out.assign(n, 0.0);
    if (spectral_work) {
      fft2_inplace(acc, R, R, true);
      for (size_t i = 0; i < n; ++i) out[i] = acc[i].real();
    }
    if (has_reaction)
      for (size_t i = 0; i < n; ++i) out[i] -= poly(c[0], u[i]);
    for (size_t i = 0; i < n; ++i) out[i] -= source[i];
  }

  // Stability bound, re-evaluated on the current state.
  double stable_dt(const std::vector<double>& u, double fallback) const {
    const double dx = 1.0 / R;
    double dt = std::numeric_limits<double>::infinity();
    double fmax = 0.0;
    for (int i = 0; i < 3; ++i) {
      const auto& ci = c[size_t(i)];
      if (ci[0] == 0 && ci[1] == 0 && ci[2] == 0) continue;
      for (double v : u) fmax = std::max(fmax, std::abs(dpoly(ci, v)));
    }
    if (fmax > 0.0) dt = std::min(dt, 0.25 * dx / fmax);
    if (a > 0.0) dt = std::min(dt, 0.2 * dx * dx / (4.0 * a));
    return std::isfinite(dt) ? dt : fallback;
  }
};

bool state_ok(const std::vector<double>& u) {
  for (double v : u)
    if (!std::isfinite(v) || std::abs(v) > 10.0) return false;
  return true;
}

}  // namespace

SolveResult solve_dcr(const DcrInstance& inst, int R, int nt, double dt_scale) {
  if (!inst.sin_terms.empty())
    throw std::invalid_argument("solve_dcr: sinusoidal flux terms unsupported");
  if (nt <= 0) throw std::invalid_argument("solve_dcr: nt must be positive");
  if (!(dt_scale > 0.0 && dt_scale <= 1.0))
    throw std::invalid_argument("solve_dcr: dt_scale must be in (0, 1]");
  if (inst.init.r != R)
    throw std::invalid_argument("solve_dcr: initial grid is " +
                                std::to_string(inst.init.r) + ", want " +
                                std::to_string(R));
  if (inst.source_kind == 3 && inst.source.r != R)
    throw std::invalid_argument("solve_dcr: source grid resolution mismatch");

  const size_t n = size_t(R) * R;
  std::vector<double> u(n);
  for (size_t i = 0; i < n; ++i) u[i] = double(inst.init.v[i]);

  SolveResult res;
  auto snapshot = [&](double t) {
    GridField g;
    g.r = R;
    g.v.resize(n);
    for (size_t i = 0; i < n; ++i) g.v[i] = float(u[i]);
    res.times.push_back(t);
    res.frames.push_back(std::move(g));
  };

  if (!state_ok(u)) {
    res.discarded = true;
    return res;
  }
  snapshot(0.0);

  const Spectral op(inst, R);
  const double interval = 1.0 / nt;
  std::vector<double> k1, k2, k3, k4, tmp(n);
  double t = 0.0;
  for (int j = 1; j <= nt; ++j) {
    const double target = double(j) / nt;
    while (t < target - 1e-12) {
      const double dt =
          std::min(op.stable_dt(u, interval) * dt_scale, target - t);
      op.rhs(u, k1);
      for (size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
      op.rhs(tmp, k2);
      for (size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
      op.rhs(tmp, k3);
      for (size_t i = 0; i < n; ++i) tmp[i] = u[i] + dt * k3[i];
      op.rhs(tmp, k4);
      for (size_t i = 0; i < n; ++i)
        u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      t += dt;
      if (!state_ok(u)) {
        res.discarded = true;
        return res;
      }
    }
    t = target;
    snapshot(target);
  }
  return res;
}

}  // namespace gpde
