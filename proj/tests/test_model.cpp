#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "graphpde/dsl.hpp"
#include "graphpde/features.hpp"
#include "graphpde/graph.hpp"
#include "graphpde/model.hpp"
#include "graphpde/rng.hpp"

using namespace gpde;

namespace {

struct Built {
  BoundGraph bg;
  GraphFeatures f;
};

GridField smooth_grid(int r, uint64_t seed) {
  // Low-frequency random field: a few sine modes with random phases.
  Rng rng = Rng::fork(seed, {0xF1E1D});
  GridField g;
  g.r = r;
  g.v.assign(size_t(r) * r, 0.f);
  for (int m = 0; m < 4; ++m) {
    const double ax = rng.uniform(-1.0, 1.0);
    const double kx = double(1 + int(rng.below(3)));
    const double ky = double(int(rng.below(3)));
    const double ph = rng.uniform(0.0, 6.283185307179586);
    for (int iy = 0; iy < r; ++iy)
      for (int ix = 0; ix < r; ++ix)
        g.v[size_t(iy) * r + ix] += float(
            ax * std::sin(6.283185307179586 * (kx * ix / double(r) +
                                               ky * iy / double(r)) +
                          ph));
  }
  return g;
}

Built build(const std::string& src, const ModelConfig& cfg,
            const std::map<std::string, GridField>& fields = {},
            const std::map<std::string, double>& scalars = {}) {
  CompileOptions opt;
  opt.n_branch = cfg.n_branch;
  opt.n_mod = cfg.n_mod;
  CompGraph g = compile(simplify_to_specific_form(parse_pde(src)), opt);
  Built b;
  b.bg = bind_numerics(g, scalars, fields, cfg.func_res);
  b.f = compute_features(b.bg.graph);
  return b;
}

const char* kAdvectionSrc = R"(
var u
scalar c = 0.3
field g initial from "g"
dt(u) + dx(c*u) + dy(u) = 0
ic u = g
)";

Built build_advection(const ModelConfig& cfg, uint64_t grid_seed = 11) {
  return build(kAdvectionSrc, cfg,
               {{"g", smooth_grid(cfg.func_res, grid_seed)}});
}

Tensor query_points(int n, uint64_t seed) {
  Rng rng = Rng::fork(seed, {0xC0});
  Tensor txy({n, 3});
  for (int i = 0; i < n; ++i) {
    txy.at2(i, 0) = rng.uniform();
    txy.at2(i, 1) = rng.uniform();
    txy.at2(i, 2) = rng.uniform();
  }
  return txy;
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Relabel the nodes of a bound graph with a random permutation.
BoundGraph permute(const BoundGraph& bg, Rng& rng) {
  const int n = bg.graph.size();
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[size_t(i)], perm[rng.below(uint64_t(i) + 1)]);

  BoundGraph out = bg;
  for (int i = 0; i < n; ++i)
    out.graph.nodes[size_t(perm[size_t(i)])] = bg.graph.nodes[size_t(i)];
  for (auto& [a, b] : out.graph.edges) {
    a = perm[size_t(a)];
    b = perm[size_t(b)];
  }
  for (auto& [name, idx] : out.graph.uf_index) idx = perm[size_t(idx)];
  return out;
}

void randomize(Model& m, uint64_t seed, double std) {
  Rng rng = Rng::fork(seed, {0xBEEF});
  for (auto& [name, tensor] : m.params)
    for (auto& v : tensor.data) v = std * rng.normal();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config presets validate and round-trip as text") {
  for (ModelConfig cfg :
       {ModelConfig::desk(), ModelConfig::paper(), ModelConfig::tiny()}) {
    CHECK_NOTHROW(cfg.validate());
    CHECK(ModelConfig::from_text(cfg.to_text()) == cfg);
  }
  CHECK(ModelConfig::desk().d_e == 96);
  CHECK(ModelConfig::paper().n_layers == 12);
  CHECK(ModelConfig::paper().n_mod == 11);

  ModelConfig bad = ModelConfig::desk();
  bad.n_heads = 5;  // 96 % 5 != 0
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = ModelConfig::desk();
  bad.func_res = 48;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = ModelConfig::desk();
  bad.n_mod = 0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = ModelConfig::paper();
  bad.n_branch = 3;  // the 128 schedule is a 4-way cell split
  CHECK_THROWS_AS(bad.validate(), ModelError);
}

TEST_CASE("conv schedules reduce each resolution to n_branch features") {
  ModelConfig desk = ModelConfig::desk();
  CHECK(conv_output_cells(desk) == 1);
  CHECK(conv_schedule(desk).back().out_ch == desk.n_branch * desk.d_e);

  ModelConfig paper = ModelConfig::paper();
  CHECK(conv_output_cells(paper) == 4);  // 2x2 map, one feature per cell
  CHECK(conv_schedule(paper).back().out_ch == paper.d_e);

  ModelConfig tiny = ModelConfig::tiny();
  CHECK(conv_output_cells(tiny) == 1);

  // Grid-encoder output shape is [n_branch, d_e] for every preset.
  for (const ModelConfig& cfg : {desk, tiny}) {
    Model m = Model::init(cfg, 3);
    Tape t;
    TapeParams p = attach_params(t, m, false);
    GridField g = smooth_grid(cfg.func_res, 5);
    Tensor gt({cfg.func_res, cfg.func_res});
    for (size_t i = 0; i < g.v.size(); ++i) gt[int64_t(i)] = double(g.v[i]);
    const int feats = function_encode_node(t, p, cfg, t.constant(gt));
    CHECK(t.val(feats).shape ==
          std::vector<int64_t>{cfg.n_branch, cfg.d_e});
  }
}

TEST_CASE("scalar encoder: deterministic, zero row reused, FD Jacobian") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 17);

  auto enc = [&](double c) {
    Tape t;
    TapeParams p = attach_params(t, m, false);
    Tensor in({1, 1});
    in[0] = c;
    const int out = scalar_encode_node(t, p, t.constant(in));
    return t.val(out).data;
  };
  CHECK(enc(0.7) == enc(0.7));  // deterministic

  // Jacobian w.r.t. the input scalar matches central differences.
  Tape t;
  TapeParams p = attach_params(t, m, false);
  Tensor in({1, 1});
  in[0] = 0.3;
  const int leaf = t.leaf(in);
  const int out = scalar_encode_node(t, p, leaf);
  t.backward(t.sum(out));
  const Tensor* g = t.grad(leaf);
  REQUIRE(g != nullptr);
  const double h = 1e-6;
  const std::vector<double> up = enc(0.3 + h), dn = enc(0.3 - h);
  double fd = 0.0;
  for (size_t i = 0; i < up.size(); ++i) fd += (up[i] - dn[i]) / (2 * h);
  CHECK(rel_diff((*g)[0], fd) < 1e-5);
}

TEST_CASE("initial embeddings compose type, payload, and degree vectors") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 23);
  Built b = build_advection(cfg);
  const int n = b.bg.graph.size();

  // Pad the graph: the pad row must equal x_pad + encode(0) + z_in[0] + z_out[0].
  CompGraph padded = pad_graph(b.bg.graph, n + 2);
  BoundGraph bgp = b.bg;
  bgp.graph = padded;
  GraphFeatures fp = compute_features(padded);

  Tape t;
  TapeParams p = attach_params(t, m, false);
  const int h0 = initial_embeddings_node(t, p, cfg, bgp, fp);
  REQUIRE(t.val(h0).shape == std::vector<int64_t>{n + 2, cfg.d_e});

  Tensor zero_in({1, 1});
  const int enc0 = scalar_encode_node(t, p, t.constant(zero_in));
  const Tensor& type_emb = m.params.at("embed.type");
  const Tensor& din = m.params.at("embed.deg_in");
  const Tensor& dout = m.params.at("embed.deg_out");
  const int pad_type = CompGraph::num_type_ids(cfg.n_branch, cfg.n_mod) - 1;
  for (int j = 0; j < cfg.d_e; ++j) {
    const double want = type_emb.at2(pad_type, j) + t.val(enc0).at2(0, j) +
                        din.at2(0, j) + dout.at2(0, j);
    CHECK(t.val(h0).at2(n, j) == doctest::Approx(want).epsilon(1e-12));
  }
  // The two pad rows are identical: encode(0) is one shared vector.
  for (int j = 0; j < cfg.d_e; ++j)
    CHECK(t.val(h0).at2(n, j) == t.val(h0).at2(n + 1, j));
}

TEST_CASE("equal-value equal-degree SC nodes get identical embedding rows") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 29);
  Built b = build("var u\nscalar c = 2\nc*u + c*u = 0", cfg);
  // find the two SC nodes
  std::vector<int> sc;
  for (int i = 0; i < b.bg.graph.size(); ++i)
    if (b.bg.graph.nodes[size_t(i)].kind == NodeKind::SC) sc.push_back(i);
  REQUIRE(sc.size() == 2);

  Tape t;
  TapeParams p = attach_params(t, m, false);
  const int h0 = initial_embeddings_node(t, p, cfg, b.bg, b.f);
  for (int j = 0; j < cfg.d_e; ++j)
    CHECK(t.val(h0).at2(sc[0], j) ==
          doctest::Approx(t.val(h0).at2(sc[1], j)).epsilon(1e-14));
}

TEST_CASE("attention bias: diagonal entry, cap reuse, and hard masking") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 31);

  // 20-node chain: distance 19 uses table entry 14 in both directions.
  CompGraph chain;
  chain.n_branch = cfg.n_branch;
  chain.n_mod = cfg.n_mod;
  chain.nodes.resize(20);
  for (auto& nd : chain.nodes) nd.kind = NodeKind::Add;
  for (int i = 0; i + 1 < 20; ++i) chain.edges.emplace_back(i, i + 1);
  GraphFeatures f = compute_features(chain);

  Tape t;
  TapeParams p = attach_params(t, m, false);
  std::vector<int> bias = attention_bias_nodes(t, p, cfg, f);
  REQUIRE(int(bias.size()) == cfg.n_heads);
  const Tensor& fwd = m.params.at("bias.fwd");
  const Tensor& rev = m.params.at("bias.rev");
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Tensor& B = t.val(bias[size_t(h)]);
    // B[i][i] = fwd[0] + rev[0] + 0
    CHECK(B.at2(3, 3) ==
          doctest::Approx(fwd.at2(0, h) + rev.at2(0, h)).epsilon(1e-14));
    // distance 19 -> capped lookup at 14, reachable so mask contributes 0
    CHECK(B.at2(0, 19) ==
          doctest::Approx(fwd.at2(14, h) + rev.at2(14, h)).epsilon(1e-14));
    CHECK(B.at2(0, 5) ==
          doctest::Approx(fwd.at2(5, h) + rev.at2(14, h)).epsilon(1e-14));
  }

  // Disconnected pair: -inf bias, softmax weight exactly zero.
  CompGraph two;
  two.n_branch = cfg.n_branch;
  two.n_mod = cfg.n_mod;
  two.nodes.resize(3);
  for (auto& nd : two.nodes) nd.kind = NodeKind::Add;
  two.edges.emplace_back(0, 1);  // node 2 disconnected
  GraphFeatures f2 = compute_features(two);
  Tape t2;
  TapeParams p2 = attach_params(t2, m, false);
  std::vector<int> bias2 = attention_bias_nodes(t2, p2, cfg, f2);
  const Tensor& B0 = t2.val(bias2[0]);
  CHECK(std::isinf(B0.at2(0, 2)));
  CHECK(B0.at2(0, 2) < 0);
  const int soft = t2.softmax_rows(bias2[0]);
  CHECK(t2.val(soft).at2(0, 2) == 0.0);
  CHECK(t2.val(soft).at2(0, 0) + t2.val(soft).at2(0, 1) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zeroed output projections make every block the identity") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 37);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string base = "layer" + std::to_string(l);
    m.params.at(base + ".attn.wo") = Tensor({cfg.d_e, cfg.d_e});
    m.params.at(base + ".ffn.w2") = Tensor({cfg.d_e, cfg.ffn_dim});
  }
  Built b = build_advection(cfg);
  Tape t;
  TapeParams p = attach_params(t, m, false);
  const int h0 = initial_embeddings_node(t, p, cfg, b.bg, b.f);
  const int hF = graphormer_forward(t, p, cfg, h0,
                                    attention_bias_nodes(t, p, cfg, b.f));
  CHECK(t.val(hF).data == t.val(h0).data);
}

TEST_CASE("predictions are invariant under node relabeling") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 41);
  Built b = build_advection(cfg);
  const Tensor txy = query_points(9, 2);
  const Tensor base = predict(m, b.bg, 0, txy);

  Rng rng = Rng::fork(20260819, {77});
  for (int trial = 0; trial < 3; ++trial) {
    BoundGraph pg = permute(b.bg, rng);
    const Tensor got = predict(m, pg, 0, txy);
    for (int64_t i = 0; i < base.numel(); ++i)
      CHECK(rel_diff(got[i], base[i]) < 1e-8);
  }
}

TEST_CASE("predictions are invariant under padding") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 43);
  Built b = build_advection(cfg);
  const Tensor txy = query_points(9, 3);
  const Tensor base = predict(m, b.bg, 0, txy);

  for (int extra : {1, 7}) {
    BoundGraph padded = b.bg;
    padded.graph = pad_graph(b.bg.graph, b.bg.graph.size() + extra);
    const Tensor got = predict(m, padded, 0, txy);
    for (int64_t i = 0; i < base.numel(); ++i)
      CHECK(rel_diff(got[i], base[i]) < 1e-8);
  }
}

TEST_CASE("latents follow declaration order across renamed systems") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 47);
  // Same physics, opposite declaration order: predictions for the same
  // physical variable must agree regardless of its slot.
  Built a = build("var u v\ndt(u) + dx(v) = 0\ndt(v) + dy(u) = 0", cfg);
  Built b2 = build("var v u\ndt(u) + dx(v) = 0\ndt(v) + dy(u) = 0", cfg);
  const Tensor txy = query_points(6, 4);
  const Tensor ua = predict(m, a.bg, 0, txy);   // u is slot 0 in a
  const Tensor ub = predict(m, b2.bg, 1, txy);  // u is slot 1 in b2
  const Tensor va = predict(m, a.bg, 1, txy);
  const Tensor vb = predict(m, b2.bg, 0, txy);
  for (int64_t i = 0; i < ua.numel(); ++i) {
    CHECK(rel_diff(ua[i], ub[i]) < 1e-8);
    CHECK(rel_diff(va[i], vb[i]) < 1e-8);
  }
}

TEST_CASE("INR decoder: constant head, z slot, coordinate derivatives") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 53);
  randomize(m, 530, 0.3);  // move hypernets off the identity point

  SUBCASE("zero last layer gives the bias everywhere") {
    Model mz = m;
    mz.params.at("inr.last.w") = Tensor({1, cfg.inr_width});
    mz.params.at("inr.last.b") = Tensor({1}, {0.125});
    Tape t;
    TapeParams p = attach_params(t, mz, false);
    Tensor mu({cfg.n_mod, cfg.d_e});
    Rng rng = Rng::fork(1, {9});
    for (auto& v : mu.data) v = rng.normal();
    const int out = inr_decode(t, p, cfg, t.constant(mu),
                               coords_node(t, query_points(5, 6)));
    for (int64_t i = 0; i < 5; ++i)
      CHECK(t.val(out).at2(i, 0) == doctest::Approx(0.125).epsilon(1e-15));
  }

  SUBCASE("coordinate gradients match central differences") {
    Tensor mu({cfg.n_mod, cfg.d_e});
    Rng rng = Rng::fork(2, {9});
    for (auto& v : mu.data) v = rng.normal();
    const Tensor txy = query_points(4, 7);

    auto value_at = [&](const Tensor& pts, int64_t row) {
      Tape t;
      TapeParams p = attach_params(t, m, false);
      const int out =
          inr_decode(t, p, cfg, t.constant(mu), coords_node(t, pts));
      return t.val(out).at2(row, 0);
    };

    Tape t;
    TapeParams p = attach_params(t, m, false);
    const int coords = coords_node(t, txy, /*leaf=*/true);
    const int out = inr_decode(t, p, cfg, t.constant(mu), coords);
    t.backward(t.sum(out));
    const Tensor* g = t.grad(coords);
    REQUIRE(g != nullptr);

    const double h = 1e-6;
    for (int64_t row = 0; row < 4; ++row)
      for (int c = 0; c < 3; ++c) {
        Tensor up = txy, dn = txy;
        up.at2(row, c) += h;
        dn.at2(row, c) -= h;
        const double fd = (value_at(up, row) - value_at(dn, row)) / (2 * h);
        CHECK(rel_diff(g->at2(row, c), fd) < 1e-5);
      }
  }
}

TEST_CASE("nrmse: hand values, scale property, tape agreement") {
  CHECK(nrmse({1, 1}, {0, 2}, 1e-6) ==
        doctest::Approx(1.0 / (1e-6 + std::sqrt(2.0))).epsilon(1e-12));
  CHECK(nrmse({0.5, -0.25}, {0.5, -0.25}, 1e-6) == 0.0);
  // pred = 0: rho / (eps + rho)
  const double rho = std::sqrt((0.09 + 0.16) / 2.0);
  CHECK(nrmse({0, 0}, {0.3, -0.4}, 1e-6) ==
        doctest::Approx(rho / (1e-6 + rho)).epsilon(1e-12));
  CHECK_THROWS_AS((void)nrmse({1.0}, {1.0, 2.0}, 1e-6), ModelError);

  // scale invariance at eps = 0
  Rng rng = Rng::fork(20260819, {55});
  std::vector<double> a(40), b(40);
  for (size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  const double base = nrmse(a, b, 0.0);
  for (double alpha : {2.0, -3.5, 1e-3, 1e6}) {
    std::vector<double> as = a, bs = b;
    for (size_t i = 0; i < a.size(); ++i) {
      as[i] *= alpha;
      bs[i] *= alpha;
    }
    CHECK(rel_diff(nrmse(as, bs, 0.0), base) <= 1e-12);
  }

  // tape-side value agrees with the plain function
  Tape t;
  Tensor pt({int64_t(a.size()), 1});
  for (size_t i = 0; i < a.size(); ++i) pt[int64_t(i)] = a[i];
  const int node = nrmse_node(t, t.constant(pt), b, 0.05);
  CHECK(t.val(node)[0] == doctest::Approx(nrmse(a, b, 0.05)).epsilon(1e-14));
}

TEST_CASE("mc_loss: perfect labels, per-variable terms, sampling consistency") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 59);
  Built b = build_advection(cfg);

  // Labels taken from the model's own predictions: loss exactly 0.
  const Tensor txy = query_points(40, 8);
  const Tensor self = predict(m, b.bg, 0, txy);
  std::vector<VarLabels> labels(1);
  labels[0].coords = txy;
  labels[0].values.assign(self.data.begin(), self.data.end());
  {
    Tape t;
    TapeParams p = attach_params(t, m, false);
    Rng rng = Rng::fork(1, {1});
    McLoss L = mc_loss(t, p, cfg, b.bg, b.f, labels, 64, kTrainEps, rng);
    CHECK(L.terms == 1);
    CHECK(t.val(L.node)[0] == doctest::Approx(0.0).epsilon(1e-12));
  }

  // Shifted labels: Monte-Carlo average approaches the full-set value.
  std::vector<double> ref = labels[0].values;
  Rng noise = Rng::fork(3, {5});
  for (auto& v : ref) v += 0.5 + 0.2 * noise.normal();
  labels[0].values = ref;
  std::vector<double> pred_all(self.data.begin(), self.data.end());
  const double full = nrmse(pred_all, ref, kTrainEps);

  double acc = 0.0;
  const int reps = 120;
  Rng draw = Rng::fork(9, {2});
  for (int repeat = 0; repeat < reps; ++repeat) {
    Tape t;
    TapeParams p = attach_params(t, m, false);
    McLoss L = mc_loss(t, p, cfg, b.bg, b.f, labels, 256, kTrainEps, draw);
    acc += t.val(L.node)[0];
  }
  CHECK(rel_diff(acc / reps, full) < 0.02);

  // Empty label sets are an error.
  std::vector<VarLabels> empty(1);
  Tape t;
  TapeParams p = attach_params(t, m, false);
  Rng rng = Rng::fork(1, {1});
  CHECK_THROWS_AS((void)mc_loss(t, p, cfg, b.bg, b.f, empty, 8, kTrainEps, rng),
                  ModelError);
}

TEST_CASE("checkpoints round-trip the model") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 61);
  Built b = build_advection(cfg);
  const Tensor txy = query_points(5, 9);
  const Tensor base = predict(m, b.bg, 0, txy);

  const std::string path64 = "model_rt64.ckpt";
  save_model(path64, m, Dtype::f64, {{"step", "123"}});
  std::map<std::string, std::string> meta;
  Model r64 = load_model(path64, &meta);
  CHECK(r64.cfg == cfg);
  CHECK(meta.at("step") == "123");
  const Tensor got64 = predict(r64, b.bg, 0, txy);
  CHECK(got64.data == base.data);  // f64 payload is bit-exact

  const std::string path32 = "model_rt32.ckpt";
  save_model(path32, m, Dtype::f32);
  Model r32 = load_model(path32);
  const Tensor got32 = predict(r32, b.bg, 0, txy);
  for (int64_t i = 0; i < base.numel(); ++i)
    CHECK(rel_diff(got32[i], base[i]) < 1e-4);
  std::remove(path64.c_str());
  std::remove(path32.c_str());
}

TEST_CASE("full finite-difference gradient check on the tiny config") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 67);
  randomize(m, 670, 0.05);  // avoid the zero-init stationary points

  Built b = build_advection(cfg);
  const Tensor txy = query_points(24, 10);
  std::vector<VarLabels> labels(1);
  labels[0].coords = txy;
  labels[0].values.resize(24);
  Rng lab = Rng::fork(5, {4});
  for (auto& v : labels[0].values) v = lab.normal();

  auto loss_of = [&](const Model& mm) {
    Tape t;
    TapeParams p = attach_params(t, mm, false);
    Rng rng = Rng::fork(77, {6});  // same draws every evaluation
    McLoss L = mc_loss(t, p, cfg, b.bg, b.f, labels, 16, kTrainEps, rng);
    return t.val(L.node)[0];
  };

  Tape t;
  TapeParams p = attach_params(t, m, true);
  Rng rng = Rng::fork(77, {6});
  McLoss L = mc_loss(t, p, cfg, b.bg, b.f, labels, 16, kTrainEps, rng);
  t.backward(L.node);

  Rng pick = Rng::fork(20260819, {99});
  int checked = 0;
  for (auto& [name, tensor] : m.params) {
    const Tensor* g = t.grad(p.at(name));
    REQUIRE_MESSAGE(g != nullptr, name);
    const int probes = int(std::min<int64_t>(tensor.numel(), 3));
    for (int q = 0; q < probes; ++q) {
      const int64_t idx =
          q == 0 ? 0 : int64_t(pick.below(uint64_t(tensor.numel())));
      const double h = 1e-5;
      Model up = m, dn = m;
      up.params.at(name)[idx] += h;
      dn.params.at(name)[idx] -= h;
      const double fd = (loss_of(up) - loss_of(dn)) / (2 * h);
      const double ana = (*g)[idx];
      const double err =
          std::abs(ana - fd) / std::max({std::abs(ana), std::abs(fd), 1e-6});
      CHECK_MESSAGE(err < 1e-4, name, "[", idx, "] ana=", ana, " fd=", fd);
      ++checked;
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("reference-scale preset constructs and runs forward") {
  ModelConfig cfg = ModelConfig::paper();
  Model m = Model::init(cfg, 71);
  Built b = build_advection(cfg, 13);  // binds a 128x128 grid
  const Tensor txy = query_points(3, 11);
  const Tensor out = predict(m, b.bg, 0, txy);
  REQUIRE(out.numel() == 3);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(std::isfinite(out[i]));
}

TEST_CASE("mismatched graph or grid configuration is rejected") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m = Model::init(cfg, 73);

  // graph compiled with different N/L
  CompileOptions opt;
  opt.n_branch = cfg.n_branch + 1;
  opt.n_mod = cfg.n_mod;
  CompGraph g =
      compile(simplify_to_specific_form(parse_pde("var u\ndt(u) = 0")), opt);
  BoundGraph bg = bind_numerics(g, {}, {}, cfg.func_res);
  GraphFeatures f = compute_features(bg.graph);
  Tape t;
  TapeParams p = attach_params(t, m, false);
  CHECK_THROWS_AS((void)encode_graph(t, p, cfg, bg, f), ModelError);

  // grid resolution different from the model's R (bound legally at 32)
  CompileOptions opt2;
  opt2.n_branch = cfg.n_branch;
  opt2.n_mod = cfg.n_mod;
  CompGraph g2 =
      compile(simplify_to_specific_form(parse_pde(kAdvectionSrc)), opt2);
  BoundGraph bg32 =
      bind_numerics(g2, {}, {{"g", smooth_grid(32, 3)}}, 32);
  CHECK_THROWS_AS((void)predict(m, bg32, 0, query_points(2, 12)), ModelError);
}

}  // TEST_SUITE
