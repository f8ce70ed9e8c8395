#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpde {

// ---------------------------------------------------------------------------
// AST for the PDE description language.
//
// Grammar (whitespace-insensitive, '#' starts a line comment):
//   system      := decl* stmt+
//   decl        := "var" ident+
//                | "scalar" ident "=" (signed_number | "?")
//                | "field" ident role ("from" string | "=" "?")
//                | ident "=" "unknown" "(" int "->" int ")"
//                | "domain" domainspec
//   role        := "coefficient" | "source" | "boundary" | "initial"
//   domainspec  := "square" "periodic" ("both"|"x"|"y"|"none")
//                | "disk" "(" number "," number "," number ")"
//   stmt        := expr "= 0" ("on" boundary ("," boundary)*)?
//                | "ic" ident ("," "order" ("0"|"1"))? "=" ident
//   boundary    := "left" | "right" | "bottom" | "top" | "outer"
//   expr        := ("-")? term (("+"|"-") term)*
//   term        := factor ("*" factor)*
//   factor      := primary ("^2")*
//   primary     := number | ident | fncall | "(" expr ")"
//   fncall      := ("dt"|"dx"|"dy"|"dn"|"sin"|"cos"|"exp10"|"log10")
//                    "(" expr ")"
//                | ident "[" int "]" "(" ident ("," ident)* ")"
//
// Canonical ASTs keep expression literals non-negative; a negated term is an
// explicit Neg node (printed as a minus sign), so printing and parsing are
// exact inverses of each other.
// ---------------------------------------------------------------------------

enum class ExprKind {
  Literal,    // non-negative inline number
  ScalarRef,  // declared scalar
  VarRef,     // unknown variable
  FieldRef,   // declared field
  Dt, Dx, Dy, Dn,
  Sin, Cos, Exp10, Log10,
  Neg, Square,
  Add, Mul,    // n-ary, children in source order
  Transform,   // output `index` of unknown transform `name` applied to args
};

struct Expr {
  ExprKind kind = ExprKind::Literal;
  double literal = 0.0;
  std::string name;
  int index = 0;  // Transform output, 1-based
  std::vector<Expr> kids;

  bool operator==(const Expr& o) const;

  static Expr lit(double v);
  static Expr ref_scalar(std::string n);
  static Expr ref_var(std::string n);
  static Expr ref_field(std::string n);
  static Expr unary(ExprKind k, Expr child);
  static Expr add(std::vector<Expr> kids);
  static Expr mul(std::vector<Expr> kids);
  static Expr transform(std::string n, int index, std::vector<Expr> args);
};

enum class FieldRole { Coefficient, Source, BoundaryValue, InitialValue };

struct ScalarDecl {
  std::string name;
  bool known = true;
  double value = 0.0;  // meaningful when known
};

struct FieldDecl {
  std::string name;
  FieldRole role = FieldRole::Coefficient;
  bool known = true;   // false: "= ?" (to be recovered / bound later)
  std::string source;  // resolution key ("from" string) when known
};

struct TransformDecl {
  std::string name;
  int m = 1;  // input arity
  int n = 1;  // output arity
};

enum class Periodicity { Both, XOnly, YOnly, None };

struct Domain {
  enum class Shape { Square, Disk };
  Shape shape = Shape::Square;
  Periodicity periodic = Periodicity::Both;
  double cx = 0.5, cy = 0.5, radius = 0.4;  // disk geometry

  bool fully_periodic() const {
    return shape == Shape::Square && periodic == Periodicity::Both;
  }
};

// Boundary selector; merged conditions may cover several edges.
struct BoundaryRef {
  bool outer = false;   // disk rim
  uint8_t edges = 0;    // bitmask, see kEdge*
  bool operator==(const BoundaryRef& o) const {
    return outer == o.outer && edges == o.edges;
  }
};
constexpr uint8_t kEdgeLeft = 1, kEdgeRight = 2, kEdgeBottom = 4, kEdgeTop = 8;

struct Equation {
  Expr root;            // statement is `root = 0`
  bool is_bc = false;
  BoundaryRef on;
};

struct InitialCondition {
  std::string var;
  int order = 0;  // 0: u(0) = g, 1: dt(u)(0) = g
  std::string field;
};

struct PdeSystem {
  std::vector<std::string> vars;               // declaration order
  std::vector<ScalarDecl> scalars;
  std::vector<FieldDecl> fields;
  std::vector<TransformDecl> transforms;
  Domain domain;                               // default: fully periodic square
  std::vector<Equation> equations;             // interior + boundary, source order
  std::vector<InitialCondition> ics;

  const ScalarDecl* find_scalar(const std::string& n) const;
  const FieldDecl* find_field(const std::string& n) const;
  const TransformDecl* find_transform(const std::string& n) const;
  bool is_var(const std::string& n) const;

  bool operator==(const PdeSystem& o) const;
};

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(int l, int c, const std::string& msg)
      : std::runtime_error(std::to_string(l) + ":" + std::to_string(c) + ": " +
                           msg),
        line(l), col(c) {}
};

// Parses and validates; throws ParseError on any lexical, syntactic, or
// semantic problem (undeclared or duplicate symbols, arity errors, boundary
// references that do not exist for the declared domain, dn outside a
// boundary condition, ...).
PdeSystem parse_pde(const std::string& text);

// Deterministic pretty-printer; parse_pde(canonical_text(s)) == s.
std::string canonical_text(const PdeSystem& s);
std::string expr_text(const Expr& e);

// Shortest decimal form that round-trips the exact double value.
std::string format_double(double v);

}  // namespace gpde
