#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "graphpde/dsl.hpp"
#include "graphpde/grid.hpp"

namespace gpde {

// ---------------------------------------------------------------------------
// Computational-graph representation of a PDE system.
//
// Node vocabulary (closed): the structural kinds below, where branch nodes
// come in N flavors b_1..b_N, modulation nodes in L flavors m_1..m_L, plus
// an isolated `pad` kind. VC (time-varying coefficient) is representable but
// never emitted here.
// ---------------------------------------------------------------------------

enum class NodeKind : uint8_t {
  UF, SC, CF, VC, IC, SDF,
  Dt, Dx, Dy,
  Add, Mul, Neg, Square, Eq0,
  Sin, Cos, Exp10, Log10,
  AT,
  Branch,  // b_sub, sub in 1..N
  Mod,     // m_sub, sub in 1..L
  Pad,
};

// Which geometric region an SDF node describes; grids are synthesized from
// the domain at bind time.
struct SdfRegion {
  enum class Kind : uint8_t { Omega, Edges, Outer };
  Kind kind = Kind::Omega;
  uint8_t edges = 0;  // for Kind::Edges, same bitmask as BoundaryRef
};

struct GNode {
  NodeKind kind = NodeKind::Pad;
  int sub = 0;  // 1-based index for Branch/Mod kinds, 0 otherwise

  // SC binding: either a resolved value or a named placeholder ("?" scalars).
  double value = 0.0;
  bool resolved = true;
  std::string name;  // placeholder name for unresolved SC

  // Function-node identity (CF/IC): field resolution key. Branch nodes carry
  // the key of their function node plus the 1-based slice index.
  std::string field_key;
  int slice = 0;

  SdfRegion sdf;  // meaningful for SDF nodes only
};

struct CompGraph {
  std::vector<GNode> nodes;
  std::vector<std::pair<int, int>> edges;  // directed src -> dst
  std::map<std::string, int> uf_index;     // variable name -> UF node
  std::vector<std::string> var_names;      // declaration order
  int n_branch = 4;                        // N
  int n_mod = 4;                           // L
  Domain domain;

  int size() const { return int(nodes.size()); }

  // Flattened node-type id for embedding lookup:
  //   0..18  = UF..AT, 19..19+N-1 = b_1..b_N,
  //   19+N..19+N+L-1 = m_1..m_L, 19+N+L = pad.
  int type_id(int node) const;
  static int num_type_ids(int n_branch, int n_mod) {
    return 19 + n_branch + n_mod + 1;
  }
  // Human-readable type name ("dx", "b_2", ...), used by the text dump.
  std::string type_name(int node) const;

  // Modulation-node indices of variable j (decl order), length L.
  std::vector<int> mod_nodes(int var) const;
  // Indices of CF/IC/SDF nodes in emission order.
  std::vector<int> function_nodes() const;
};

struct GraphError : std::runtime_error {
  explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// Specific-form rewrite: removes zero terms (literal zeros and resolved
// scalars equal to 0), drops unit coefficients from products, rebinds known
// constant fields (max-min <= 1e-12, and not used by an initial condition)
// as scalar declarations, and merges boundary conditions whose simplified
// forms are structurally identical into one condition on the union region.
// `fields` supplies grids keyed by each field's resolution key (its `from`
// string); pass nullptr to skip constant-field detection. Idempotent; never
// touches symbolic unknowns.
PdeSystem simplify_to_specific_form(
    const PdeSystem& system,
    const std::map<std::string, GridField>* fields = nullptr);

struct CompileOptions {
  int n_branch = 4;            // N branch nodes per function node
  int n_mod = 4;               // L modulation nodes per variable
  bool allow_unknowns = false; // permit "?" scalars/fields (inverse mode)
};

// Lower a specific-form system to its computational DAG. Deterministic:
// identical systems produce identical node and edge arrays.
CompGraph compile(const PdeSystem& system, const CompileOptions& opt = {});

// Append isolated pad nodes until the graph has `target_nodes` nodes.
CompGraph pad_graph(const CompGraph& g, int target_nodes);

// A graph whose numeric inputs are all resolved: every SC node has a value,
// and every function node's grid is available under its field key (SDF grids
// are synthesized from the domain at resolution R).
struct BoundGraph {
  CompGraph graph;
  std::vector<std::pair<std::string, GridField>> fields;  // unique keys

  const GridField* find_field(const std::string& key) const {
    for (const auto& [k, f] : fields)
      if (k == key) return &f;
    return nullptr;
  }
};

BoundGraph bind_numerics(const CompGraph& g,
                         const std::map<std::string, double>& scalars,
                         const std::map<std::string, GridField>& fields,
                         int R);

// True iff the edge relation is acyclic (topological sort succeeds).
bool is_acyclic(const CompGraph& g);

// Line-oriented dump: `idx<TAB>type<TAB>binding` per node, then
// `src -> dst` per edge, both in index order.
std::string graph_text(const CompGraph& g);

// Resolution key of a declared field: its `from` string when known, else the
// field's own name (to be supplied at bind time).
std::string field_resolution_key(const FieldDecl& f);

}  // namespace gpde
