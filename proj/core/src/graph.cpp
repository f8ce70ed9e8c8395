#include "graphpde/graph.hpp"

#include <algorithm>
#include <queue>

namespace gpde {

// ---------------------------------------------------------------------------
// CompGraph helpers

int CompGraph::type_id(int node) const {
  const GNode& n = nodes[node];
  switch (n.kind) {
    case NodeKind::Branch: return 19 + (n.sub - 1);
    case NodeKind::Mod: return 19 + n_branch + (n.sub - 1);
    case NodeKind::Pad: return 19 + n_branch + n_mod;
    default: return int(n.kind);
  }
}

std::string CompGraph::type_name(int node) const {
  static const char* base[] = {"UF",  "SC",  "CF",  "VC",     "IC",  "SDF",
                               "dt",  "dx",  "dy",  "add",    "mul", "neg",
                               "square", "eq0", "sin", "cos", "exp10",
                               "log10", "AT"};
  const GNode& n = nodes[node];
  switch (n.kind) {
    case NodeKind::Branch: return "b_" + std::to_string(n.sub);
    case NodeKind::Mod: return "m_" + std::to_string(n.sub);
    case NodeKind::Pad: return "pad";
    default: return base[int(n.kind)];
  }
}

std::vector<int> CompGraph::mod_nodes(int var) const {
  const int uf = uf_index.at(var_names.at(var));
  std::vector<int> out;
  for (const auto& [src, dst] : edges)
    if (src == uf && nodes[dst].kind == NodeKind::Mod) out.push_back(dst);
  // Order by modulation slot, not node index: the slot is the identity that
  // survives relabeling.
  std::sort(out.begin(), out.end(), [this](int a, int b) {
    return nodes[size_t(a)].sub < nodes[size_t(b)].sub;
  });
  return out;
}

std::vector<int> CompGraph::function_nodes() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    const NodeKind k = nodes[i].kind;
    if (k == NodeKind::CF || k == NodeKind::IC || k == NodeKind::SDF)
      out.push_back(i);
  }
  return out;
}

std::string field_resolution_key(const FieldDecl& f) {
  return f.known ? f.source : f.name;
}

// ---------------------------------------------------------------------------
// Specific-form simplification

namespace {

bool zero_scalar(const Expr& e, const PdeSystem& s) {
  if (e.kind == ExprKind::Literal) return e.literal == 0.0;
  if (e.kind == ExprKind::ScalarRef) {
    const ScalarDecl* d = s.find_scalar(e.name);
    return d && d->known && d->value == 0.0;
  }
  return false;
}

bool unit_scalar(const Expr& e, const PdeSystem& s) {
  if (e.kind == ExprKind::Literal) return e.literal == 1.0;
  if (e.kind == ExprKind::ScalarRef) {
    const ScalarDecl* d = s.find_scalar(e.name);
    return d && d->known && d->value == 1.0;
  }
  return false;
}

Expr simplify_expr(const Expr& in, const PdeSystem& s) {
  Expr e = in;
  for (auto& k : e.kids) k = simplify_expr(k, s);
  switch (e.kind) {
    case ExprKind::Mul: {
      for (const auto& k : e.kids)
        if (zero_scalar(k, s)) return Expr::lit(0.0);
      std::vector<Expr> kept;
      for (auto& k : e.kids)
        if (!unit_scalar(k, s)) kept.push_back(std::move(k));
      if (kept.empty()) return Expr::lit(1.0);
      if (kept.size() == 1) return std::move(kept[0]);
      e.kids = std::move(kept);
      return e;
    }
    case ExprKind::Add: {
      std::vector<Expr> kept;
      for (auto& k : e.kids) {
        const Expr& inner = (k.kind == ExprKind::Neg) ? k.kids[0] : k;
        if (zero_scalar(inner, s)) continue;
        kept.push_back(std::move(k));
      }
      if (kept.empty()) return Expr::lit(0.0);
      if (kept.size() == 1) return std::move(kept[0]);
      e.kids = std::move(kept);
      return e;
    }
    case ExprKind::Neg:
      if (zero_scalar(e.kids[0], s)) return Expr::lit(0.0);
      return e;
    default:
      return e;
  }
}

void replace_field_ref(Expr& e, const std::string& name) {
  if (e.kind == ExprKind::FieldRef && e.name == name) {
    e.kind = ExprKind::ScalarRef;
    return;
  }
  for (auto& k : e.kids) replace_field_ref(k, name);
}

}  // namespace

PdeSystem simplify_to_specific_form(
    const PdeSystem& system, const std::map<std::string, GridField>* fields) {
  PdeSystem s = system;

  // (1) Known constant fields become scalar declarations, unless an initial
  // condition needs them as grids.
  if (fields) {
    std::vector<FieldDecl> kept_fields;
    for (const auto& f : s.fields) {
      bool rebind = false;
      double value = 0.0;
      if (f.known) {
        auto it = fields->find(field_resolution_key(f));
        if (it != fields->end() && !it->second.v.empty() &&
            it->second.constant_within(1e-12)) {
          bool used_by_ic = false;
          for (const auto& ic : s.ics)
            if (ic.field == f.name) used_by_ic = true;
          if (!used_by_ic) {
            rebind = true;
            value = double(it->second.v[0]);
          }
        }
      }
      if (rebind) {
        s.scalars.push_back(ScalarDecl{f.name, true, value});
        for (auto& eq : s.equations) replace_field_ref(eq.root, f.name);
      } else {
        kept_fields.push_back(f);
      }
    }
    s.fields = std::move(kept_fields);
  }

  // (2) Zero-term removal and unit-coefficient elision.
  for (auto& eq : s.equations) eq.root = simplify_expr(eq.root, s);

  // (3) Merge boundary conditions with structurally identical forms.
  std::vector<Equation> merged;
  for (auto& eq : s.equations) {
    if (eq.is_bc) {
      bool absorbed = false;
      for (auto& prev : merged) {
        if (prev.is_bc && prev.on.outer == eq.on.outer &&
            prev.root == eq.root) {
          prev.on.edges |= eq.on.edges;
          absorbed = true;
          break;
        }
      }
      if (absorbed) continue;
    }
    merged.push_back(std::move(eq));
  }
  s.equations = std::move(merged);
  return s;
}

// ---------------------------------------------------------------------------
// Compilation

namespace {

std::string region_key(const BoundaryRef& on) {
  if (on.outer) return "sdf:outer";
  std::string s = "sdf:";
  bool first = true;
  auto put = [&](uint8_t bit, const char* name) {
    if (on.edges & bit) {
      if (!first) s += ",";
      s += name;
      first = false;
    }
  };
  put(kEdgeLeft, "left");
  put(kEdgeRight, "right");
  put(kEdgeBottom, "bottom");
  put(kEdgeTop, "top");
  return s;
}

class Emitter {
public:
  Emitter(const PdeSystem& sys, const CompileOptions& opt)
      : sys_(sys), opt_(opt) {
    g_.n_branch = opt.n_branch;
    g_.n_mod = opt.n_mod;
    g_.domain = sys.domain;
  }

  CompGraph run() {
    for (const auto& v : sys_.vars) {
      GNode n;
      n.kind = NodeKind::UF;
      const int idx = add_node(n);
      g_.uf_index[v] = idx;
      g_.var_names.push_back(v);
    }

    if (!sys_.domain.fully_periodic()) {
      GNode n;
      n.kind = NodeKind::SDF;
      n.sdf = {SdfRegion::Kind::Omega, 0};
      n.field_key = "sdf:omega";
      sdf_omega_ = add_node(n);
      for (const auto& v : sys_.vars) add_edge(sdf_omega_, g_.uf_index[v]);
    }

    for (const auto& eq : sys_.equations) {
      int root = emit_expr(eq.root);
      if (eq.is_bc) {
        GNode sn;
        sn.kind = NodeKind::SDF;
        sn.sdf.kind = eq.on.outer ? SdfRegion::Kind::Outer
                                  : SdfRegion::Kind::Edges;
        sn.sdf.edges = eq.on.edges;
        sn.field_key = region_key(eq.on);
        const int gsdf = add_node(sn);
        const int m = add_plain(NodeKind::Mul);
        add_edge(root, m);
        add_edge(gsdf, m);
        root = m;
      }
      const int z = add_plain(NodeKind::Eq0);
      add_edge(root, z);
    }

    for (const auto& ic : sys_.ics) {
      const FieldDecl* fd = sys_.find_field(ic.field);
      if (!fd->known && !opt_.allow_unknowns)
        throw GraphError("unresolved field '" + fd->name +
                         "' (declared '= ?') at compile time");
      GNode n;
      n.kind = NodeKind::IC;
      n.field_key = field_resolution_key(*fd);
      const int icn = add_node(n);
      const int uf = g_.uf_index.at(ic.var);
      if (ic.order == 0) {
        add_edge(icn, uf);
      } else {
        const int d = add_plain(NodeKind::Dt);
        add_edge(uf, d);
        add_edge(icn, d);
      }
    }

    // Branch nodes: N per function node, in function-node index order.
    const int before_aux = g_.size();
    for (int i = 0; i < before_aux; ++i) {
      const NodeKind k = g_.nodes[i].kind;
      if (k != NodeKind::CF && k != NodeKind::IC && k != NodeKind::SDF)
        continue;
      for (int b = 1; b <= opt_.n_branch; ++b) {
        GNode n;
        n.kind = NodeKind::Branch;
        n.sub = b;
        n.field_key = g_.nodes[i].field_key;
        n.slice = b;
        const int j = add_node(n);
        add_edge(j, i);
      }
    }

    // Modulation nodes: L per variable, in declaration order.
    for (const auto& v : g_.var_names) {
      const int uf = g_.uf_index.at(v);
      for (int l = 1; l <= opt_.n_mod; ++l) {
        GNode n;
        n.kind = NodeKind::Mod;
        n.sub = l;
        const int j = add_node(n);
        add_edge(uf, j);
      }
    }
    return std::move(g_);
  }

private:
  int add_node(const GNode& n) {
    g_.nodes.push_back(n);
    return g_.size() - 1;
  }
  int add_plain(NodeKind k) {
    GNode n;
    n.kind = k;
    return add_node(n);
  }
  void add_edge(int a, int b) { g_.edges.emplace_back(a, b); }

  int emit_unary(NodeKind k, const Expr& child) {
    const int c = emit_expr(child);
    const int n = add_plain(k);
    add_edge(c, n);
    return n;
  }

  int emit_expr(const Expr& e) {
    switch (e.kind) {
      case ExprKind::Literal: {
        GNode n;
        n.kind = NodeKind::SC;
        n.value = e.literal;
        return add_node(n);
      }
      case ExprKind::ScalarRef: {
        const ScalarDecl* d = sys_.find_scalar(e.name);
        GNode n;
        n.kind = NodeKind::SC;
        if (d->known) {
          n.value = d->value;
        } else {
          if (!opt_.allow_unknowns)
            throw GraphError("unresolved scalar '" + e.name +
                             "' (declared '= ?') at compile time");
          n.resolved = false;
          n.name = e.name;
        }
        return add_node(n);
      }
      case ExprKind::VarRef:
        return g_.uf_index.at(e.name);
      case ExprKind::FieldRef: {
        const FieldDecl* d = sys_.find_field(e.name);
        if (!d->known && !opt_.allow_unknowns)
          throw GraphError("unresolved field '" + e.name +
                           "' (declared '= ?') at compile time");
        GNode n;
        n.kind = NodeKind::CF;
        n.field_key = field_resolution_key(*d);
        return add_node(n);
      }
      case ExprKind::Dt: return emit_unary(NodeKind::Dt, e.kids[0]);
      case ExprKind::Dx: return emit_unary(NodeKind::Dx, e.kids[0]);
      case ExprKind::Dy: return emit_unary(NodeKind::Dy, e.kids[0]);
      case ExprKind::Sin: return emit_unary(NodeKind::Sin, e.kids[0]);
      case ExprKind::Cos: return emit_unary(NodeKind::Cos, e.kids[0]);
      case ExprKind::Exp10: return emit_unary(NodeKind::Exp10, e.kids[0]);
      case ExprKind::Log10: return emit_unary(NodeKind::Log10, e.kids[0]);
      case ExprKind::Neg: return emit_unary(NodeKind::Neg, e.kids[0]);
      case ExprKind::Square: return emit_unary(NodeKind::Square, e.kids[0]);
      case ExprKind::Add:
      case ExprKind::Mul: {
        std::vector<int> kids;
        kids.reserve(e.kids.size());
        for (const auto& k : e.kids) kids.push_back(emit_expr(k));
        const int n = add_plain(e.kind == ExprKind::Add ? NodeKind::Add
                                                        : NodeKind::Mul);
        for (int c : kids) add_edge(c, n);
        return n;
      }
      case ExprKind::Dn: {
        // dn(w) = dx(w)*dx(SDF) + dy(w)*dy(SDF): the normal is the gradient
        // of the domain SDF.
        const int w1 = emit_expr(e.kids[0]);
        const int dxw = add_plain(NodeKind::Dx);
        add_edge(w1, dxw);
        const int dxs = add_plain(NodeKind::Dx);
        add_edge(sdf_omega_, dxs);
        const int m1 = add_plain(NodeKind::Mul);
        add_edge(dxw, m1);
        add_edge(dxs, m1);
        const int w2 = emit_expr(e.kids[0]);
        const int dyw = add_plain(NodeKind::Dy);
        add_edge(w2, dyw);
        const int dys = add_plain(NodeKind::Dy);
        add_edge(sdf_omega_, dys);
        const int m2 = add_plain(NodeKind::Mul);
        add_edge(dyw, m2);
        add_edge(dys, m2);
        const int a = add_plain(NodeKind::Add);
        add_edge(m1, a);
        add_edge(m2, a);
        return a;
      }
      case ExprKind::Transform: {
        auto it = at_chain_.find(e.name);
        if (it == at_chain_.end()) it = build_chain(e);
        return it->second.at(size_t(e.index - 1));
      }
    }
    throw GraphError("unhandled expression kind");
  }

  std::map<std::string, std::vector<int>>::iterator build_chain(
      const Expr& ref) {
    const TransformDecl* td = sys_.find_transform(ref.name);
    const int k = std::max(td->m, td->n);

    std::vector<int> inputs;
    for (const auto& arg : ref.kids) inputs.push_back(g_.uf_index.at(arg.name));
    for (int i = td->m; i < k; ++i) {  // zero padding when m < n
      GNode n;
      n.kind = NodeKind::SC;
      n.value = 0.0;
      inputs.push_back(add_node(n));
    }

    std::vector<int> ats;
    for (int i = 0; i < k; ++i) ats.push_back(add_plain(NodeKind::AT));

    for (int j = 0; j < k; ++j) add_edge(inputs[j], ats[0]);
    for (int i = 1; i < k; ++i) {
      add_edge(ats[i - 1], ats[i]);
      for (int j = i; j < k; ++j) add_edge(inputs[j], ats[i]);
    }
    return at_chain_.emplace(ref.name, std::move(ats)).first;
  }

  const PdeSystem& sys_;
  CompileOptions opt_;
  CompGraph g_;
  int sdf_omega_ = -1;
  std::map<std::string, std::vector<int>> at_chain_;
};

}  // namespace

CompGraph compile(const PdeSystem& system, const CompileOptions& opt) {
  return Emitter(system, opt).run();
}

CompGraph pad_graph(const CompGraph& g, int target_nodes) {
  if (target_nodes < g.size())
    throw GraphError("pad target " + std::to_string(target_nodes) +
                     " smaller than graph size " + std::to_string(g.size()));
  CompGraph out = g;
  while (out.size() < target_nodes) {
    GNode n;
    n.kind = NodeKind::Pad;
    out.nodes.push_back(n);
  }
  return out;
}

BoundGraph bind_numerics(const CompGraph& g,
                         const std::map<std::string, double>& scalars,
                         const std::map<std::string, GridField>& fields,
                         int R) {
  BoundGraph bg;
  bg.graph = g;
  for (auto& n : bg.graph.nodes) {
    if (n.kind == NodeKind::SC && !n.resolved) {
      auto it = scalars.find(n.name);
      if (it == scalars.end())
        throw GraphError("no value provided for scalar '" + n.name + "'");
      n.value = it->second;
      n.resolved = true;
    }
  }
  for (int i = 0; i < bg.graph.size(); ++i) {
    const GNode& n = bg.graph.nodes[i];
    const NodeKind k = n.kind;
    if (k != NodeKind::CF && k != NodeKind::IC && k != NodeKind::SDF) continue;
    if (bg.find_field(n.field_key)) continue;
    if (k == NodeKind::SDF) {
      GridField grid;
      if (n.sdf.kind == SdfRegion::Kind::Omega) {
        grid = sdf_domain(g.domain, R);
      } else {
        BoundaryRef on;
        on.outer = n.sdf.kind == SdfRegion::Kind::Outer;
        on.edges = n.sdf.edges;
        grid = sdf_boundary(g.domain, on, R);
      }
      bg.fields.emplace_back(n.field_key, std::move(grid));
    } else {
      auto it = fields.find(n.field_key);
      if (it == fields.end())
        throw GraphError("no grid provided for field '" + n.field_key + "'");
      if (it->second.r != R)
        throw GraphError("field '" + n.field_key + "' has resolution " +
                         std::to_string(it->second.r) + ", expected " +
                         std::to_string(R));
      bg.fields.emplace_back(n.field_key, it->second);
    }
  }
  return bg;
}

bool is_acyclic(const CompGraph& g) {
  const int n = g.size();
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : g.edges) {
    adj[a].push_back(b);
    ++indeg[b];
  }
  std::queue<int> q;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) q.push(i);
  int seen = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    ++seen;
    for (int v : adj[u])
      if (--indeg[v] == 0) q.push(v);
  }
  return seen == n;
}

std::string graph_text(const CompGraph& g) {
  std::string out;
  for (int i = 0; i < g.size(); ++i) {
    const GNode& n = g.nodes[i];
    std::string binding = "-";
    switch (n.kind) {
      case NodeKind::SC:
        binding = n.resolved ? format_double(n.value) : ("?" + n.name);
        break;
      case NodeKind::CF:
      case NodeKind::IC:
      case NodeKind::SDF:
        binding = n.field_key;
        break;
      case NodeKind::Branch:
        binding = n.field_key + "[" + std::to_string(n.slice) + "]";
        break;
      default:
        break;
    }
    out += std::to_string(i) + "\t" + g.type_name(i) + "\t" + binding + "\n";
  }
  for (const auto& [a, b] : g.edges)
    out += std::to_string(a) + " -> " + std::to_string(b) + "\n";
  return out;
}

}  // namespace gpde
