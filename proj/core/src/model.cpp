#include "graphpde/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gpde {

// ---------------------------------------------------------------------------
// Configuration

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_e = 768;
  c.n_layers = 12;
  c.n_heads = 32;
  c.ffn_dim = 1536;
  c.n_branch = 4;
  c.n_mod = 11;
  c.inr_width = 768;
  c.func_res = 128;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.d_e = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 32;
  c.n_branch = 2;
  c.n_mod = 2;
  c.inr_width = 16;
  c.func_res = 16;
  return c;
}

void ModelConfig::validate() const {
  if (d_e <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_dim <= 0 ||
      inr_width <= 0)
    throw ModelError("config: all dimensions must be positive");
  if (n_branch < 1) throw ModelError("config: n_branch must be >= 1");
  if (n_mod < 1) throw ModelError("config: n_mod must be >= 1");
  if (d_e % n_heads != 0)
    throw ModelError("config: d_e must be divisible by n_heads");
  (void)conv_schedule(*this);  // throws when func_res has no schedule
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "d_e=" << d_e << "\nn_layers=" << n_layers << "\nn_heads=" << n_heads
     << "\nffn_dim=" << ffn_dim << "\nn_branch=" << n_branch
     << "\nn_mod=" << n_mod << "\ninr_width=" << inr_width
     << "\nfunc_res=" << func_res << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ModelError("config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const int value = std::stoi(line.substr(eq + 1));
    if (key == "d_e") c.d_e = value;
    else if (key == "n_layers") c.n_layers = value;
    else if (key == "n_heads") c.n_heads = value;
    else if (key == "ffn_dim") c.ffn_dim = value;
    else if (key == "n_branch") c.n_branch = value;
    else if (key == "n_mod") c.n_mod = value;
    else if (key == "inr_width") c.inr_width = value;
    else if (key == "func_res") c.func_res = value;
    else throw ModelError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return d_e == o.d_e && n_layers == o.n_layers && n_heads == o.n_heads &&
         ffn_dim == o.ffn_dim && n_branch == o.n_branch && n_mod == o.n_mod &&
         inr_width == o.inr_width && func_res == o.func_res;
}

// ---------------------------------------------------------------------------
// Grid-encoder geometry. Each supported resolution has a fixed stride
// schedule whose flattened output is exactly n_branch features of d_e:
// either a 1x1 map with n_branch*d_e channels (split channelwise) or an
// n_branch-cell map with d_e channels (one feature per cell).

std::vector<ConvSpec> conv_schedule(const ModelConfig& cfg) {
  switch (cfg.func_res) {
    case 128:
      // 128 -> 32 -> 8 -> 2: a 2x2 map of d_e-channel cells.
      if (cfg.n_branch != 4)
        throw ModelError("config: func_res 128 requires n_branch = 4");
      return {{1, 32, 4, 4}, {32, 128, 4, 4}, {128, cfg.d_e, 4, 4}};
    case 32:
      // 32 -> 8 -> 2 -> 1: one cell carrying all n_branch features.
      return {{1, 32, 4, 4},
              {32, 128, 4, 4},
              {128, cfg.n_branch * cfg.d_e, 2, 2}};
    case 16:
      // 16 -> 4 -> 1.
      return {{1, 32, 4, 4}, {32, cfg.n_branch * cfg.d_e, 4, 4}};
    default:
      throw ModelError("config: no grid-encoder schedule for resolution " +
                       std::to_string(cfg.func_res));
  }
}

int conv_output_cells(const ModelConfig& cfg) {
  int r = cfg.func_res;
  for (const ConvSpec& c : conv_schedule(cfg)) r = (r - c.kernel) / c.stride + 1;
  return r * r;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

double trunc_normal(Rng& rng, double std) {
  for (;;) {
    const double x = rng.normal();
    if (std::abs(x) <= 2.0) return x * std;
  }
}

Tensor randn_trunc(Rng& rng, std::vector<int64_t> shape, double std) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = trunc_normal(rng, std);
  return t;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng = Rng::fork(seed, {0xA0D});
  const double std = 0.02;
  auto w = [&](const std::string& name, std::vector<int64_t> shape) {
    m.params[name] = randn_trunc(rng, std::move(shape), std);
  };
  auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
    m.params[name] = Tensor(std::move(shape));
  };
  auto ones = [&](const std::string& name, std::vector<int64_t> shape) {
    m.params[name] = Tensor::full(std::move(shape), 1.0);
  };

  const int de = cfg.d_e;
  const int types = CompGraph::num_type_ids(cfg.n_branch, cfg.n_mod);
  w("embed.type", {types, de});
  w("embed.deg_in", {ModelConfig::kDegCap + 1, de});
  w("embed.deg_out", {ModelConfig::kDegCap + 1, de});
  w("bias.fwd", {ModelConfig::kPathCap + 1, cfg.n_heads});
  w("bias.rev", {ModelConfig::kPathCap + 1, cfg.n_heads});

  const int sh = ModelConfig::kScalarHidden;
  w("scalar_enc.w1", {sh, 1});
  zeros("scalar_enc.b1", {sh});
  w("scalar_enc.w2", {sh, sh});
  zeros("scalar_enc.b2", {sh});
  w("scalar_enc.w3", {de, sh});
  zeros("scalar_enc.b3", {de});

  int ci = 0;
  for (const ConvSpec& c : conv_schedule(cfg)) {
    const std::string base = "func_enc.conv" + std::to_string(++ci);
    w(base + ".w", {c.out_ch, c.in_ch, c.kernel, c.kernel});
    zeros(base + ".b", {c.out_ch});
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string base = "layer" + std::to_string(l);
    ones(base + ".ln1.g", {de});
    zeros(base + ".ln1.b", {de});
    w(base + ".attn.wq", {de, de});
    zeros(base + ".attn.bq", {de});
    w(base + ".attn.wk", {de, de});
    zeros(base + ".attn.bk", {de});
    w(base + ".attn.wv", {de, de});
    zeros(base + ".attn.bv", {de});
    w(base + ".attn.wo", {de, de});
    zeros(base + ".attn.bo", {de});
    ones(base + ".ln2.g", {de});
    zeros(base + ".ln2.b", {de});
    w(base + ".ffn.w1", {cfg.ffn_dim, de});
    zeros(base + ".ffn.b1", {cfg.ffn_dim});
    w(base + ".ffn.w2", {de, cfg.ffn_dim});
    zeros(base + ".ffn.b2", {de});
  }

  const int iw = cfg.inr_width;
  // The INR stack has no layer norm and injects coordinates multiplicatively,
  // so its weights need variance-preserving scales: std 0.02 would attenuate
  // the coordinate signal ~250x per layer and freeze every spatial degree of
  // freedom. With coords in [0,1]^3 (sum of squares ~1), std 1 gives the gate
  // g unit variance, and std 1/sqrt(width) keeps the sine pre-activations near
  // unit variance layer over layer.
  const double inr_gate_std = 1.0;
  const double inr_hidden_std = 1.0 / std::sqrt(double(iw));
  for (int l = 1; l <= cfg.n_mod; ++l) {
    const std::string inr = "inr" + std::to_string(l);
    m.params[inr + ".win"] = randn_trunc(rng, {iw, 4}, inr_gate_std);
    zeros(inr + ".bin", {iw});
    m.params[inr + ".wh"] = randn_trunc(rng, {iw, iw}, inr_hidden_std);
    zeros(inr + ".bh", {iw});
    const std::string hyper = "hyper" + std::to_string(l);
    // Hypernets start as the identity modulation: scale exactly 1, shift 0.
    w(hyper + ".scale.w1", {de, de});
    zeros(hyper + ".scale.b1", {de});
    zeros(hyper + ".scale.w2", {iw, de});
    ones(hyper + ".scale.b2", {iw});
    w(hyper + ".shift.w1", {de, de});
    zeros(hyper + ".shift.b1", {de});
    zeros(hyper + ".shift.w2", {iw, de});
    zeros(hyper + ".shift.b2", {iw});
  }
  w("inr.last.w", {1, iw});
  zeros("inr.last.b", {1});
  return m;
}

void save_model(const std::string& path, const Model& m, Dtype as,
                const std::map<std::string, std::string>& extra_meta) {
  std::map<std::string, std::string> meta = extra_meta;
  std::istringstream is(m.cfg.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    if (eq != std::string::npos)
      meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  save_checkpoint(path, m.params, as, meta);
}

Model load_model(const std::string& path,
                 std::map<std::string, std::string>* meta_out) {
  std::map<std::string, std::string> meta;
  Model m;
  m.params = load_checkpoint(path, &meta);
  static const char* kKeys[] = {"d_e",      "n_layers", "n_heads",
                                "ffn_dim",  "n_branch", "n_mod",
                                "inr_width", "func_res"};
  std::string text;
  for (const char* k : kKeys) {
    auto it = meta.find(k);
    if (it == meta.end())
      throw ModelError("checkpoint is missing config key '" +
                       std::string(k) + "'");
    text += std::string(k) + "=" + it->second + "\n";
  }
  m.cfg = ModelConfig::from_text(text);
  if (meta_out) *meta_out = std::move(meta);
  return m;
}

int TapeParams::at(const std::string& name) const {
  auto it = id.find(name);
  if (it == id.end()) throw ModelError("unknown parameter '" + name + "'");
  return it->second;
}

TapeParams attach_params(Tape& tape, const Model& m, bool trainable) {
  TapeParams p;
  for (const auto& [name, value] : m.params)
    p.id[name] = trainable ? tape.leaf(value) : tape.constant(value);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pieces

int scalar_encode_node(Tape& t, const TapeParams& p, int inputs) {
  int h = t.gelu(t.affine(inputs, p.at("scalar_enc.w1"), p.at("scalar_enc.b1")));
  h = t.gelu(t.affine(h, p.at("scalar_enc.w2"), p.at("scalar_enc.b2")));
  return t.affine(h, p.at("scalar_enc.w3"), p.at("scalar_enc.b3"));
}

int function_encode_node(Tape& t, const TapeParams& p, const ModelConfig& cfg,
                         int grid) {
  int x = t.reshape(grid, {1, cfg.func_res, cfg.func_res});
  const std::vector<ConvSpec> sched = conv_schedule(cfg);
  for (size_t i = 0; i < sched.size(); ++i) {
    const std::string base = "func_enc.conv" + std::to_string(i + 1);
    x = t.conv2d(x, p.at(base + ".w"), p.at(base + ".b"), sched[i].stride);
    if (i + 1 < sched.size()) x = t.relu(x);
  }
  const int cells = conv_output_cells(cfg);
  if (cells == 1) return t.reshape(x, {cfg.n_branch, cfg.d_e});
  // cells == n_branch, d_e channels: transpose [d_e, cells] -> [cells, d_e]
  // with a constant identity (the tape has no transpose primitive).
  const int flat = t.reshape(x, {cfg.d_e, cells});
  Tensor eye({cells, cells});
  for (int i = 0; i < cells; ++i) eye.at2(i, i) = 1.0;
  return t.matmul(t.constant(std::move(eye)), flat, false, true);
}

namespace {
int degree_clamp(int d) { return std::min(d, ModelConfig::kDegCap); }
}  // namespace

int initial_embeddings_node(Tape& t, const TapeParams& p,
                            const ModelConfig& cfg, const BoundGraph& bg,
                            const GraphFeatures& f,
                            const std::map<std::string, int>* field_overrides) {
  const CompGraph& g = bg.graph;
  const int n = g.size();
  const int de = cfg.d_e;

  // Scalar payloads: row 0 encodes 0 for every info-free node; SC nodes get
  // one row each.
  std::vector<double> svals = {0.0};
  std::vector<int64_t> srow(size_t(n), 0);
  for (int i = 0; i < n; ++i) {
    const GNode& node = g.nodes[size_t(i)];
    if (node.kind != NodeKind::SC) continue;
    if (!node.resolved)
      throw ModelError("SC node " + std::to_string(i) +
                       " ('" + node.name + "') is unresolved; bind first");
    if (!std::isfinite(node.value))
      throw ModelError("SC node " + std::to_string(i) + " has non-finite value");
    srow[size_t(i)] = int64_t(svals.size());
    svals.push_back(node.value);
  }
  Tensor sv({int64_t(svals.size()), 1});
  for (size_t i = 0; i < svals.size(); ++i) sv[int64_t(i)] = svals[i];
  const int scalar_rows = scalar_encode_node(t, p, t.constant(std::move(sv)));
  int xi = t.gather_rows(scalar_rows, srow);

  // Branch nodes replace their scalar row with a grid-feature slice. Each
  // unique field key is encoded once; a 0/1 row mask swaps the payloads.
  std::vector<std::string> keys;
  for (int i = 0; i < n; ++i) {
    const GNode& node = g.nodes[size_t(i)];
    if (node.kind != NodeKind::Branch) continue;
    if (std::find(keys.begin(), keys.end(), node.field_key) == keys.end())
      keys.push_back(node.field_key);
  }
  if (!keys.empty()) {
    Tensor keep({int64_t(n), int64_t(de)});
    for (int i = 0; i < n; ++i) {
      const double v = g.nodes[size_t(i)].kind == NodeKind::Branch ? 0.0 : 1.0;
      for (int j = 0; j < de; ++j) keep.at2(i, j) = v;
    }
    xi = t.mul(xi, t.constant(std::move(keep)));
    for (const std::string& key : keys) {
      int grid_node = -1;
      if (field_overrides) {
        auto it = field_overrides->find(key);
        if (it != field_overrides->end()) grid_node = it->second;
      }
      if (grid_node < 0) {
        const GridField* grid = bg.find_field(key);
        if (!grid) throw ModelError("no grid bound for field '" + key + "'");
        if (grid->r != cfg.func_res)
          throw ModelError("field '" + key + "' resolution " +
                           std::to_string(grid->r) + " != model resolution " +
                           std::to_string(cfg.func_res));
        Tensor gt({grid->r, grid->r});
        for (size_t i = 0; i < grid->v.size(); ++i)
          gt[int64_t(i)] = double(grid->v[i]);
        grid_node = t.constant(std::move(gt));
      }
      const int feats = function_encode_node(t, p, cfg, grid_node);
      std::vector<int64_t> frow(size_t(n), 0);
      Tensor pick({int64_t(n), int64_t(de)});
      for (int i = 0; i < n; ++i) {
        const GNode& node = g.nodes[size_t(i)];
        if (node.kind != NodeKind::Branch || node.field_key != key) continue;
        frow[size_t(i)] = node.slice - 1;
        for (int j = 0; j < de; ++j) pick.at2(i, j) = 1.0;
      }
      xi = t.add(xi, t.mul(t.gather_rows(feats, frow),
                           t.constant(std::move(pick))));
    }
  }

  std::vector<int64_t> tids(static_cast<size_t>(n));
  std::vector<int64_t> din(static_cast<size_t>(n));
  std::vector<int64_t> dout(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    tids[size_t(i)] = f.type_ids[size_t(i)];
    din[size_t(i)] = degree_clamp(f.in_deg[size_t(i)]);
    dout[size_t(i)] = degree_clamp(f.out_deg[size_t(i)]);
  }
  int h = t.add(t.gather_rows(p.at("embed.type"), tids), xi);
  h = t.add(h, t.gather_rows(p.at("embed.deg_in"), din));
  return t.add(h, t.gather_rows(p.at("embed.deg_out"), dout));
}

std::vector<int> attention_bias_nodes(Tape& t, const TapeParams& p,
                                      const ModelConfig& cfg,
                                      const GraphFeatures& f) {
  const int n = f.n;
  std::vector<int64_t> fwd_idx(size_t(n) * n), rev_idx(size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      fwd_idx[size_t(i) * n + j] = f.phi_at(i, j);
      rev_idx[size_t(i) * n + j] = f.phi_at(j, i);
    }
  const int fwd = t.gather_rows(p.at("bias.fwd"), fwd_idx);  // [n*n, heads]
  const int rev = t.gather_rows(p.at("bias.rev"), rev_idx);
  Tensor mask({int64_t(n), int64_t(n)});
  for (size_t i = 0; i < f.mask.size(); ++i) mask[int64_t(i)] = f.mask[i];
  const int mask_node = t.constant(std::move(mask));

  std::vector<int> bias(size_t(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const int bh = t.add(t.reshape(t.slice_cols(fwd, h, 1), {n, n}),
                         t.reshape(t.slice_cols(rev, h, 1), {n, n}));
    bias[size_t(h)] = t.add(bh, mask_node);
  }
  return bias;
}

namespace {
int transformer_layer(Tape& t, const TapeParams& p, const ModelConfig& cfg,
                      int h, const std::vector<int>& bias, int layer) {
  const std::string base = "layer" + std::to_string(layer);
  const int de = cfg.d_e;
  const int dh = de / cfg.n_heads;

  const int ln1 = t.layer_norm(h, p.at(base + ".ln1.g"), p.at(base + ".ln1.b"));
  const int q = t.affine(ln1, p.at(base + ".attn.wq"), p.at(base + ".attn.bq"));
  const int k = t.affine(ln1, p.at(base + ".attn.wk"), p.at(base + ".attn.bk"));
  const int v = t.affine(ln1, p.at(base + ".attn.wv"), p.at(base + ".attn.bv"));

  std::vector<int> heads(size_t(cfg.n_heads));
  const double inv_sqrt = 1.0 / std::sqrt(double(de));
  for (int hd = 0; hd < cfg.n_heads; ++hd) {
    const int qh = t.slice_cols(q, int64_t(hd) * dh, dh);
    const int kh = t.slice_cols(k, int64_t(hd) * dh, dh);
    const int vh = t.slice_cols(v, int64_t(hd) * dh, dh);
    const int scores =
        t.add(t.scale(t.matmul(qh, kh, false, true), inv_sqrt),
              bias[size_t(hd)]);
    heads[size_t(hd)] = t.matmul(t.softmax_rows(scores), vh);
  }
  const int attn = t.affine(t.concat_cols(heads), p.at(base + ".attn.wo"),
                            p.at(base + ".attn.bo"));
  const int h1 = t.add(h, attn);

  const int ln2 = t.layer_norm(h1, p.at(base + ".ln2.g"), p.at(base + ".ln2.b"));
  const int f1 = t.gelu(t.affine(ln2, p.at(base + ".ffn.w1"),
                                 p.at(base + ".ffn.b1")));
  const int f2 = t.affine(f1, p.at(base + ".ffn.w2"), p.at(base + ".ffn.b2"));
  return t.add(h1, f2);
}
}  // namespace

int graphormer_forward(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
                       int h0, const std::vector<int>& bias) {
  if (int(bias.size()) != cfg.n_heads)
    throw ModelError("graphormer_forward: want one bias matrix per head");
  int h = h0;
  for (int l = 0; l < cfg.n_layers; ++l)
    h = transformer_layer(tape, p, cfg, h, bias, l);
  return h;
}

Latents encode_graph(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
                     const BoundGraph& bg, const GraphFeatures& f,
                     const std::map<std::string, int>* field_overrides) {
  const CompGraph& g = bg.graph;
  if (g.n_branch != cfg.n_branch || g.n_mod != cfg.n_mod)
    throw ModelError("graph was compiled with N=" + std::to_string(g.n_branch) +
                     ", L=" + std::to_string(g.n_mod) +
                     " but the model expects N=" + std::to_string(cfg.n_branch) +
                     ", L=" + std::to_string(cfg.n_mod));
  if (f.n != g.size()) throw ModelError("features/graph size mismatch");

  const int h0 = initial_embeddings_node(tape, p, cfg, bg, f, field_overrides);
  const std::vector<int> bias = attention_bias_nodes(tape, p, cfg, f);
  const int h = graphormer_forward(tape, p, cfg, h0, bias);

  Latents out;
  for (size_t j = 0; j < g.var_names.size(); ++j) {
    const std::vector<int> mods = g.mod_nodes(int(j));
    if (int(mods.size()) != cfg.n_mod)
      throw ModelError("variable '" + g.var_names[j] + "' has " +
                       std::to_string(mods.size()) + " modulation nodes");
    std::vector<int64_t> idx(mods.begin(), mods.end());
    out.mu.push_back(tape.gather_rows(h, idx));
  }
  return out;
}

int coords_node(Tape& tape, const Tensor& txy, bool leaf) {
  if (txy.rank() != 2 || txy.shape[1] != 3)
    throw ModelError("coords: want [P, 3] rows of (t, x, y)");
  const int64_t n = txy.shape[0];
  Tensor c({n, 4});
  for (int64_t i = 0; i < n; ++i) {
    c.at2(i, 0) = txy.at2(i, 0);
    c.at2(i, 1) = txy.at2(i, 1);
    c.at2(i, 2) = txy.at2(i, 2);
    c.at2(i, 3) = 0.0;  // z slot, unused but present
  }
  return leaf ? tape.leaf(std::move(c)) : tape.constant(std::move(c));
}

int inr_decode(Tape& t, const TapeParams& p, const ModelConfig& cfg, int mu,
               int coords) {
  const int64_t n_pts = t.val(coords).shape[0];
  const int iw = cfg.inr_width;
  int h = t.constant(Tensor::full({n_pts, iw}, 1.0));
  for (int l = 1; l <= cfg.n_mod; ++l) {
    const std::string inr = "inr" + std::to_string(l);
    const std::string hyper = "hyper" + std::to_string(l);
    const int g = t.affine(coords, p.at(inr + ".win"), p.at(inr + ".bin"));
    const int mu_row = t.gather_rows(mu, {int64_t(l) - 1});  // [1, d_e]
    auto modulation = [&](const char* which) {
      const std::string base = hyper + "." + which;
      const int hid = t.gelu(
          t.affine(mu_row, p.at(base + ".w1"), p.at(base + ".b1")));
      const int out = t.affine(hid, p.at(base + ".w2"), p.at(base + ".b2"));
      return t.broadcast_to(t.reshape(out, {iw}), {n_pts, iw});
    };
    const int s_scale = modulation("scale");
    const int s_shift = modulation("shift");
    const int pre = t.affine(t.mul(h, g), p.at(inr + ".wh"), p.at(inr + ".bh"));
    const int q = t.add(t.mul(s_scale, pre), s_shift);
    h = t.scale(t.sin_(q), std::sqrt(2.0));  // sigma(0)=0, sigma'(0)=sqrt(2)
  }
  return t.affine(h, p.at("inr.last.w"), p.at("inr.last.b"));
}

Tensor predict(const Model& m, const BoundGraph& bg, int var,
               const Tensor& txy) {
  Tape tape;
  const TapeParams p = attach_params(tape, m, /*trainable=*/false);
  const GraphFeatures f = compute_features(bg.graph);
  const Latents lat = encode_graph(tape, p, m.cfg, bg, f);
  if (var < 0 || var >= int(lat.mu.size()))
    throw ModelError("variable index out of range");
  const int out =
      inr_decode(tape, p, m.cfg, lat.mu[size_t(var)], coords_node(tape, txy));
  const Tensor& v = tape.val(out);
  Tensor flat({v.shape[0]});
  for (int64_t i = 0; i < v.numel(); ++i) flat[i] = v[i];
  return flat;
}

double nrmse(const std::vector<double>& pred, const std::vector<double>& ref,
             double eps) {
  if (pred.size() != ref.size())
    throw ModelError("nrmse: length mismatch " + std::to_string(pred.size()) +
                     " vs " + std::to_string(ref.size()));
  if (pred.empty()) throw ModelError("nrmse: empty arrays");
  double se = 0.0, sr = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    se += d * d;
    sr += ref[i] * ref[i];
  }
  const double n = double(pred.size());
  return std::sqrt(se / n) / (eps + std::sqrt(sr / n));
}

int nrmse_node(Tape& t, int pred, const std::vector<double>& ref, double eps) {
  const Tensor& pv = t.val(pred);
  if (size_t(pv.numel()) != ref.size())
    throw ModelError("nrmse_node: length mismatch");
  if (ref.empty()) throw ModelError("nrmse_node: empty reference");
  Tensor rt(pv.shape);
  double sr = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    rt[int64_t(i)] = ref[i];
    sr += ref[i] * ref[i];
  }
  const double denom = eps + std::sqrt(sr / double(ref.size()));
  const int diff = t.sub(pred, t.constant(std::move(rt)));
  return t.scale(t.sqrt_(t.mean(t.square(diff))), 1.0 / denom);
}

McLoss mc_loss(Tape& tape, const TapeParams& p, const ModelConfig& cfg,
               const BoundGraph& bg, const GraphFeatures& f,
               const std::vector<VarLabels>& labels, int K, double eps_train,
               Rng& rng) {
  if (K <= 0) throw ModelError("mc_loss: K must be positive");
  const Latents lat = encode_graph(tape, p, cfg, bg, f);
  if (labels.size() != lat.mu.size())
    throw ModelError("mc_loss: need one label set per variable");

  McLoss out;
  for (size_t j = 0; j < labels.size(); ++j) {
    const VarLabels& lab = labels[j];
    const int64_t n_pts = int64_t(lab.values.size());
    if (n_pts == 0) throw ModelError("mc_loss: empty label set");
    if (lab.coords.rank() != 2 || lab.coords.shape[0] != n_pts ||
        lab.coords.shape[1] != 3)
      throw ModelError("mc_loss: labels want [P, 3] coords matching values");

    Tensor sub({int64_t(K), 3});
    std::vector<double> ref(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
      const int64_t i = int64_t(rng.below(uint64_t(n_pts)));
      sub.at2(k, 0) = lab.coords.at2(i, 0);
      sub.at2(k, 1) = lab.coords.at2(i, 1);
      sub.at2(k, 2) = lab.coords.at2(i, 2);
      ref[size_t(k)] = lab.values[size_t(i)];
    }
    const int pred = inr_decode(tape, p, cfg, lat.mu[j],
                                coords_node(tape, sub));
    const int term = nrmse_node(tape, pred, ref, eps_train);
    out.node = out.terms == 0 ? term : tape.add(out.node, term);
    ++out.terms;
  }
  return out;
}

}  // namespace gpde
