#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "graphpde/dataset.hpp"
#include "graphpde/dcr.hpp"
#include "graphpde/dsl.hpp"
#include "graphpde/fields.hpp"
#include "graphpde/graph.hpp"
#include "graphpde/grid.hpp"
#include "graphpde/rng.hpp"

using namespace gpde;

namespace {

double grid_rel_l2(const GridField& a, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = double(a.v[i]) - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

double grid_mean(const GridField& g) {
  double s = 0.0;
  for (float v : g.v) s += double(v);
  return s / double(g.v.size());
}

GridField sine_x(int r, double amp_y = 0.0) {
  GridField g(r);
  for (int iy = 0; iy < r; ++iy)
    for (int ix = 0; ix < r; ++ix)
      g.at(iy, ix) = float(std::sin(2.0 * M_PI * ix / r) *
                           (1.0 + amp_y * std::cos(2.0 * M_PI * iy / r)));
  return g;
}

int count_kind(const CompGraph& g, NodeKind k) {
  int n = 0;
  for (const GNode& nd : g.nodes) n += nd.kind == k;
  return n;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("random-field sampler matches its covariance operator") {
  GrfConfig cfg;  // 50 / 5 / 3 at R = 32
  const int r = cfg.resolution;
  const int n_samples = 4096;
  Rng rng = Rng::fork(777, {0x97F});

  std::vector<double> mean(size_t(r) * r, 0.0), sq(size_t(r) * r, 0.0);
  double coeff_sq = 0.0;  // empirical (1,0)-cosine coefficient, second moment
  const double sqrt2 = std::sqrt(2.0);
  for (int s = 0; s < n_samples; ++s) {
    const GridField g = sample_grf(cfg, rng);
    double coeff = 0.0;
    for (int iy = 0; iy < r; ++iy)
      for (int ix = 0; ix < r; ++ix) {
        const double v = double(g.at(iy, ix));
        mean[size_t(iy) * r + ix] += v;
        sq[size_t(iy) * r + ix] += v * v;
        coeff += v * sqrt2 * std::cos(2.0 * M_PI * ix / r);
      }
    coeff /= double(r) * r;
    coeff_sq += coeff * coeff;
  }

  // Mode (1,0) variance against the analytic eigenvalue, within 10%.
  const double lambda = grf_mode_variance(cfg, 1, 0);
  CHECK(lambda ==
        doctest::Approx(2500.0 / std::pow(4.0 * M_PI * M_PI + 25.0, 3.0)));
  const double var_hat = coeff_sq / n_samples;
  CHECK(std::abs(var_hat - lambda) / lambda < 0.10);

  // Pointwise zero mean within the Monte-Carlo error bound.
  double worst_mean = 0.0;
  for (double& m : mean) worst_mean = std::max(worst_mean, std::abs(m / n_samples));
  CHECK(worst_mean < 0.05);

  // Spatial stationarity: per-point variance agrees across the grid.
  auto var_at = [&](int iy, int ix) {
    const size_t i = size_t(iy) * r + ix;
    const double m = mean[i] / n_samples;
    return sq[i] / n_samples - m * m;
  };
  const double v0 = var_at(0, 0);
  for (auto [iy, ix] : {std::pair{7, 19}, {31, 31}, {16, 5}, {1, 30}}) {
    CHECK(std::abs(var_at(iy, ix) - v0) / v0 < 0.10);
  }
}

TEST_CASE("random-field draws are deterministic per stream") {
  GrfConfig cfg;
  cfg.resolution = 16;
  Rng a = Rng::fork(5, {1, 2});
  Rng b = Rng::fork(5, {1, 2});
  CHECK(sample_grf(cfg, a).v == sample_grf(cfg, b).v);
  Rng c = Rng::fork(6, {1, 2});
  CHECK(sample_grf(cfg, c).v != sample_grf(cfg, a).v);
  CHECK_THROWS_AS((void)sample_grf(GrfConfig{50, 5, 3, 12}, a),
                  std::invalid_argument);
}

TEST_CASE("nearest-neighbor extension") {
  SUBCASE("ties go to the lowest row-major cell") {
    GridField f(4);
    f.at(0, 0) = 3.0f;
    f.at(3, 3) = 7.0f;
    std::vector<uint8_t> inside(16, 0);
    inside[0] = 1;
    inside[15] = 1;
    const GridField out = extend_nearest(f, inside);
    // (0,3) is 3 cells from both inside points: lowest row-major index wins.
    CHECK(out.at(0, 3) == 3.0f);
    CHECK(out.at(3, 0) == 3.0f);  // also equidistant
    CHECK(out.at(0, 1) == 3.0f);
    CHECK(out.at(3, 2) == 7.0f);
    CHECK(out.at(0, 0) == 3.0f);  // inside cells unchanged
    CHECK(out.at(3, 3) == 7.0f);
  }

  SUBCASE("constant field stays constant; inside values never change") {
    const int r = 12;
    std::vector<uint8_t> inside(size_t(r) * r, 0);
    for (int iy = 3; iy < 7; ++iy)
      for (int ix = 5; ix < 9; ++ix) inside[size_t(iy) * r + ix] = 1;
    GridField f(r, 2.5f);
    const GridField c = extend_nearest(f, inside);
    for (float v : c.v) CHECK(v == 2.5f);

    Rng rng = Rng::fork(9, {3});
    for (auto& v : f.v) v = float(rng.normal());
    const GridField e = extend_nearest(f, inside);
    for (size_t i = 0; i < f.v.size(); ++i)
      if (inside[i]) CHECK(e.v[i] == f.v[i]);
  }

  SUBCASE("matches an independent argmin scan on a random disk") {
    const int r = 16;
    GridField f(r);
    Rng rng = Rng::fork(11, {4});
    for (auto& v : f.v) v = float(rng.normal());
    std::vector<uint8_t> inside(size_t(r) * r, 0);
    for (int iy = 0; iy < r; ++iy)
      for (int ix = 0; ix < r; ++ix) {
        const double dx = ix / double(r) - 0.5, dy = iy / double(r) - 0.5;
        inside[size_t(iy) * r + ix] = dx * dx + dy * dy < 0.3 * 0.3;
      }
    const GridField got = extend_nearest(f, inside);
    // Oracle: lexicographic minimum over (distance^2, row-major index).
    for (int iy = 0; iy < r; ++iy)
      for (int ix = 0; ix < r; ++ix) {
        if (inside[size_t(iy) * r + ix]) continue;
        long best_d = -1;
        int best = -1;
        for (int j = int(f.v.size()) - 1; j >= 0; --j) {  // reverse scan
          if (!inside[size_t(j)]) continue;
          const long dx = long(j % r) - ix, dy = long(j / r) - iy;
          const long d = dx * dx + dy * dy;
          if (best_d < 0 || d < best_d || (d == best_d && j < best)) {
            best_d = d;
            best = j;
          }
        }
        CHECK(got.at(iy, ix) == f.v[size_t(best)]);
      }
  }

  SUBCASE("rejects empty masks and size mismatches") {
    GridField f(4);
    CHECK_THROWS_AS((void)extend_nearest(f, std::vector<uint8_t>(16, 0)),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)extend_nearest(f, std::vector<uint8_t>(9, 1)),
                    std::invalid_argument);
  }
}

TEST_CASE("signed distance fields have unit gradient away from the medial axis") {
  const int r = 64;
  const double h = 1.0 / r;

  Domain disk;
  disk.shape = Domain::Shape::Disk;
  disk.cx = 0.5;
  disk.cy = 0.5;
  disk.radius = 0.3;
  const GridField sd = sdf_domain(disk, r);
  CHECK(sd.at(32, 32) == doctest::Approx(-0.3).epsilon(1e-6));
  int checked = 0;
  for (int iy = 1; iy < r - 1; ++iy)
    for (int ix = 1; ix < r - 1; ++ix) {
      const double dx = ix * h - 0.5, dy = iy * h - 0.5;
      // The center is the medial axis; third derivatives of the distance
      // blow up like 1/r^2 there, so give the stencil some room.
      if (std::hypot(dx, dy) <= 4.5 * h) continue;
      const double gx = (sd.at(iy, ix + 1) - sd.at(iy, ix - 1)) / (2 * h);
      const double gy = (sd.at(iy + 1, ix) - sd.at(iy - 1, ix)) / (2 * h);
      CHECK(std::hypot(gx, gy) == doctest::Approx(1.0).epsilon(5e-2));
      ++checked;
    }
  CHECK(checked > 3000);

  // x-periodic strip: distance runs along y only; medial axis is y = 1/2.
  Domain strip;
  strip.shape = Domain::Shape::Square;
  strip.periodic = Periodicity::XOnly;
  const GridField ss = sdf_domain(strip, r);
  for (int iy = 1; iy < r - 1; ++iy) {
    if (std::abs(iy * h - 0.5) <= 2.5 * h) continue;
    const double gy = (ss.at(iy + 1, 7) - ss.at(iy - 1, 7)) / (2 * h);
    const double gx = (ss.at(iy, 8) - ss.at(iy, 6)) / (2 * h);
    CHECK(std::hypot(gx, gy) == doctest::Approx(1.0).epsilon(5e-2));
  }
}

TEST_CASE("forced instance draws give the expected systems") {
  // All coefficients zero + diffusion: the pure heat equation.
  DcrInstance heat;
  heat.diffusion_form = 1;
  heat.a = 0.005;
  GrfConfig grf;
  grf.resolution = 16;
  Rng rng = Rng::fork(3, {0xA});
  heat.init = sample_grf(grf, rng);
  build_system(heat);

  CHECK(heat.system.equations.size() == 1);
  CHECK(parse_pde(canonical_text(heat.system)) == heat.system);
  const CompGraph g = compile(heat.system);
  CHECK(count_kind(g, NodeKind::Dt) == 1);
  CHECK(count_kind(g, NodeKind::Dx) == 2);  // dx(dx(u))
  CHECK(count_kind(g, NodeKind::Dy) == 2);
  CHECK(count_kind(g, NodeKind::IC) == 1);
  int sc = -1;
  for (const GNode& nd : g.nodes)
    if (nd.kind == NodeKind::SC) {
      CHECK(sc == -1);  // exactly one scalar: the diffusivity
      sc = 1;
      CHECK(nd.value == 0.005);  // %.17g literals round-trip exactly
    }
  CHECK(sc == 1);

  // The three diffusion forms produce three distinct graphs.
  DcrInstance fact = heat, divf = heat;
  fact.diffusion_form = 2;
  divf.diffusion_form = 3;
  build_system(fact);
  build_system(divf);
  CHECK(count_kind(compile(fact.system), NodeKind::SC) == 3);  // sqrt(a) x3
  CHECK(count_kind(compile(divf.system), NodeKind::SC) == 2);  // a twice
  CHECK(canonical_text(fact.system) != canonical_text(heat.system));
  CHECK(canonical_text(divf.system) != canonical_text(heat.system));
}

TEST_CASE("family sampling hits its published frequencies") {
  DcrFamilyConfig family;
  family.resolution = 8;  // tiny fields keep 10k draws cheap
  Rng rng = Rng::fork(20260819, {0x5A});

  int kinds[4] = {0, 0, 0, 0};
  int forms[3] = {0, 0, 0};
  int with_a = 0, bad_zero_a = 0, bad_range = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const DcrInstance inst = sample_dcr_instance(family, rng);
    ++kinds[inst.source_kind];
    const bool lin = inst.c[1][1] == 0 && inst.c[1][2] == 0 &&
                     inst.c[2][1] == 0 && inst.c[2][2] == 0;
    if (inst.a == 0.0) {
      // Zero diffusion is only reachable under linear fluxes.
      bad_zero_a += inst.diffusion_form != 0 || !lin;
    } else {
      ++with_a;
      ++forms[inst.diffusion_form - 1];
      bad_range += inst.a < 1e-3 || inst.a > 1e-2;
    }
  }
  CHECK(bad_zero_a == 0);
  CHECK(bad_range == 0);

  // Source categories at 5:1:5:5 within two points.
  const double p[4] = {5.0 / 16, 1.0 / 16, 5.0 / 16, 5.0 / 16};
  for (int k = 0; k < 4; ++k)
    CHECK(std::abs(double(kinds[k]) / n - p[k]) < 0.02);
  // The three diffusion forms are equiprobable among a > 0.
  for (int f = 0; f < 3; ++f)
    CHECK(std::abs(double(forms[f]) / with_a - 1.0 / 3) < 0.03);

  // The zero-diffusion branch fires at 0.2 where every draw qualifies:
  // a linear-flux family (the general family hits the branch too rarely
  // for a stable estimate).
  DcrFamilyConfig lin_family = advection_diffusion_family(false);
  lin_family.resolution = 8;
  int zero_a = 0;
  const int m = 4000;
  for (int i = 0; i < m; ++i)
    zero_a += sample_dcr_instance(lin_family, rng).a == 0.0;
  CHECK(std::abs(double(zero_a) / m - 0.2) < 0.025);
}

TEST_CASE("sampled instances are valid systems end to end") {
  DcrFamilyConfig family;
  family.resolution = 16;
  Rng rng = Rng::fork(42, {0x5B});
  for (int i = 0; i < 40; ++i) {
    const DcrInstance inst = sample_dcr_instance(family, rng);
    CHECK(parse_pde(canonical_text(inst.system)) == inst.system);
    const CompGraph g = compile(inst.system);
    CHECK(is_acyclic(g));
    const BoundGraph bg = bind_numerics(g, {}, inst.fields, 16);
    CHECK(bg.graph.size() == g.size());
  }

  // Restricted family: fluxes stay linear, reaction stays off.
  DcrFamilyConfig ad = advection_diffusion_family(true);
  ad.resolution = 16;
  for (int i = 0; i < 40; ++i) {
    const DcrInstance inst = sample_dcr_instance(ad, rng);
    for (int k = 0; k < 3; ++k) CHECK(inst.c[0][size_t(k)] == 0.0);
    CHECK(inst.c[1][1] == 0.0);
    CHECK(inst.c[1][2] == 0.0);
    CHECK(inst.c[2][1] == 0.0);
    CHECK(inst.c[2][2] == 0.0);
    CHECK(inst.sin_terms.empty());
  }
  DcrFamilyConfig nosrc = advection_diffusion_family(false);
  nosrc.resolution = 16;
  for (int i = 0; i < 10; ++i)
    CHECK(sample_dcr_instance(nosrc, rng).source_kind == 0);
}

TEST_CASE("solver reproduces the decaying heat mode") {
  const int r = 32;
  DcrInstance inst;
  inst.diffusion_form = 1;
  inst.a = 0.01;
  inst.init = sine_x(r);
  build_system(inst);

  const SolveResult sol = solve_dcr(inst, r, 4);
  REQUIRE(!sol.discarded);
  REQUIRE(sol.frames.size() == 5);
  CHECK(sol.times.back() == 1.0);
  const double decay = std::exp(-4.0 * M_PI * M_PI * inst.a);
  std::vector<double> ref(size_t(r) * r);
  for (int iy = 0; iy < r; ++iy)
    for (int ix = 0; ix < r; ++ix)
      ref[size_t(iy) * r + ix] = decay * std::sin(2.0 * M_PI * ix / r);
  CHECK(grid_rel_l2(sol.frames.back(), ref) < 1e-4);
}

TEST_CASE("solver translates a profile under pure advection") {
  const int r = 32;
  DcrInstance inst;
  inst.c[1][0] = 0.5;  // f_1(u) = 0.5 u -> u_t + 0.5 u_x = 0
  inst.init = sine_x(r, 0.3);
  build_system(inst);

  const SolveResult sol = solve_dcr(inst, r, 4);
  REQUIRE(!sol.discarded);
  // c t = 0.5: exactly 16 cells, so the reference lives on the grid.
  std::vector<double> ref(size_t(r) * r);
  for (int iy = 0; iy < r; ++iy)
    for (int ix = 0; ix < r; ++ix)
      ref[size_t(iy) * r + ix] =
          double(inst.init.at(iy, (ix - 16 + r) % r));
  CHECK(grid_rel_l2(sol.frames.back(), ref) < 1e-3);
}

TEST_CASE("conservative fluxes preserve the spatial mean") {
  const int r = 32;
  DcrInstance inst;
  inst.c[1][1] = 1.0;  // f_1 = u^2
  inst.c[2][0] = 0.5;  // f_2 = 0.5 u
  inst.diffusion_form = 3;
  inst.a = 0.01;
  GrfConfig grf;
  Rng rng = Rng::fork(8, {0xC});
  inst.init = sample_grf(grf, rng);
  for (auto& v : inst.init.v) v = 0.1f * v + 1.0f;  // mean ~1, gentle slopes
  build_system(inst);

  const SolveResult sol = solve_dcr(inst, r, 8);
  REQUIRE(!sol.discarded);
  // The k = 0 multipliers are exactly zero, so the only drift left is the
  // float cast in the stored frames (~1e-9); a broken scheme drifts ~1e-3.
  const double m0 = grid_mean(sol.frames.front());
  for (const GridField& f : sol.frames)
    CHECK(std::abs(grid_mean(f) - m0) / std::abs(m0) < 1e-7);
}

TEST_CASE("halving the time step moves the solution by under 1e-5 RMS") {
  const int r = 32;
  DcrInstance inst;
  inst.c[0][2] = 0.5;   // reaction 0.5 u^3
  inst.c[1][0] = 0.8;   // f_1 = 0.8 u + 0.3 u^2
  inst.c[1][1] = 0.3;
  inst.c[2][0] = -0.4;  // f_2 = -0.4 u
  inst.diffusion_form = 1;
  inst.a = 0.008;
  inst.source_kind = 2;
  inst.source_value = 0.3;
  GrfConfig grf;
  Rng rng = Rng::fork(21, {0xD});
  inst.init = sample_grf(grf, rng);
  for (auto& v : inst.init.v) v *= 0.3f;
  build_system(inst);

  const SolveResult full = solve_dcr(inst, r, 2);
  const SolveResult half = solve_dcr(inst, r, 2, 0.5);
  REQUIRE(!full.discarded);
  REQUIRE(!half.discarded);
  double rms = 0.0;
  const size_t n = full.frames.back().v.size();
  for (size_t i = 0; i < n; ++i) {
    const double d =
        double(full.frames.back().v[i]) - double(half.frames.back().v[i]);
    rms += d * d;
  }
  CHECK(std::sqrt(rms / double(n)) < 1e-5);
}

TEST_CASE("blow-ups are discarded, never emitted") {
  const int r = 32;
  DcrInstance inst;
  inst.c[0][2] = -5.0;  // u_t = +5 u^3: finite-time blow-up
  inst.init = GridField(r, 2.0f);
  build_system(inst);
  const SolveResult sol = solve_dcr(inst, r, 4);
  CHECK(sol.discarded);
  CHECK(sol.frames.size() < 5);

  // Labels that survive obey the cap.
  DcrFamilyConfig ad = advection_diffusion_family(true);
  Rng rng = Rng::fork(12, {0xE});
  const DcrInstance ok = sample_dcr_instance(ad, rng);
  const SolveResult sol2 = solve_dcr(ok, ad.resolution, 4);
  if (!sol2.discarded)
    for (const GridField& f : sol2.frames)
      for (float v : f.v) CHECK(std::abs(v) <= 10.0f);
}

TEST_CASE("solver rejects structure outside its contract") {
  DcrInstance inst;
  inst.init = GridField(16, 0.0f);
  build_system(inst);
  CHECK_THROWS_AS((void)solve_dcr(inst, 32, 4), std::invalid_argument);
  CHECK_THROWS_AS((void)solve_dcr(inst, 16, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)solve_dcr(inst, 16, 4, 0.0), std::invalid_argument);
  inst.sin_terms.push_back({1, false, 0.5, 1.0, 0.0});
  CHECK_THROWS_AS((void)solve_dcr(inst, 16, 4), std::invalid_argument);
}

TEST_CASE("datasets round-trip and regenerate byte-identically") {
  namespace fs = std::filesystem;
  const std::string dir_a = (fs::temp_directory_path() / "gpde_ds_a").string();
  const std::string dir_b = (fs::temp_directory_path() / "gpde_ds_b").string();
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  DcrFamilyConfig family = advection_diffusion_family(true);
  const int draws = generate_dataset(family, 3, 8, 1000, dir_a);
  CHECK(draws >= 3);
  const int draws_b = generate_dataset(family, 3, 8, 1000, dir_b);
  CHECK(draws == draws_b);

  auto bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(bytes(dir_a + "/manifest.txt") == bytes(dir_b + "/manifest.txt"));
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05d.bin", i);
    CHECK(bytes(dir_a + "/" + std::string(name)) ==
          bytes(dir_b + "/" + std::string(name)));
  }

  const Dataset ds = read_dataset(dir_a);
  REQUIRE(ds.samples.size() == 3);
  CHECK(ds.resolution == 32);
  for (const DatasetSample& s : ds.samples) {
    CHECK(s.times.size() == 9);
    CHECK(s.frames.size() == 9);
    CHECK(s.times.front() == 0.0);
    CHECK(s.times.back() == 1.0);
    CHECK(s.fields.count("g") == 1);
    // Stored text parses, compiles, and binds against the stored fields.
    const PdeSystem sys = parse_pde(s.dsl);
    const BoundGraph bg = bind_numerics(compile(sys), {}, s.fields, 32);
    CHECK(is_acyclic(bg.graph));
    // Labels replay the initial condition at t = 0.
    for (size_t i = 0; i < s.frames.front().v.size(); ++i)
      CHECK(s.frames.front().v[i] == s.fields.at("g").v[i]);
  }

  fs::remove_all(dir_b);

  SUBCASE("corrupt payloads are rejected by checksum") {
    std::fstream f(dir_a + "/sample_00001.bin",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(40);
    char c = 0;
    f.seekg(40);
    f.get(c);
    c = char(c ^ 0x40);
    f.seekp(40);
    f.put(c);
    f.close();
    CHECK_THROWS_WITH_AS((void)read_dataset(dir_a),
                         doctest::Contains("checksum"), DatasetError);
  }

  SUBCASE("version mismatches are rejected") {
    std::ifstream in(dir_a + "/manifest.txt", std::ios::binary);
    std::string m(std::istreambuf_iterator<char>(in), {});
    in.close();
    const size_t at = m.find("version: 1");
    REQUIRE(at != std::string::npos);
    m.replace(at, 10, "version: 9");
    std::ofstream out(dir_a + "/manifest.txt", std::ios::binary);
    out << m;
    out.close();
    CHECK_THROWS_WITH_AS((void)read_dataset(dir_a),
                         doctest::Contains("version"), DatasetError);
  }

  fs::remove_all(dir_a);
}

}  // TEST_SUITE
