#include "graphpde/dsl.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

namespace gpde {

// --------------------------------------------------------------------------
// Expr helpers

Expr Expr::lit(double v) {
  Expr e;
  e.kind = ExprKind::Literal;
  e.literal = v;
  return e;
}
Expr Expr::ref_scalar(std::string n) {
  Expr e;
  e.kind = ExprKind::ScalarRef;
  e.name = std::move(n);
  return e;
}
Expr Expr::ref_var(std::string n) {
  Expr e;
  e.kind = ExprKind::VarRef;
  e.name = std::move(n);
  return e;
}
Expr Expr::ref_field(std::string n) {
  Expr e;
  e.kind = ExprKind::FieldRef;
  e.name = std::move(n);
  return e;
}
Expr Expr::unary(ExprKind k, Expr child) {
  Expr e;
  e.kind = k;
  e.kids.push_back(std::move(child));
  return e;
}
Expr Expr::add(std::vector<Expr> kids) {
  Expr e;
  e.kind = ExprKind::Add;
  e.kids = std::move(kids);
  return e;
}
Expr Expr::mul(std::vector<Expr> kids) {
  Expr e;
  e.kind = ExprKind::Mul;
  e.kids = std::move(kids);
  return e;
}
Expr Expr::transform(std::string n, int index, std::vector<Expr> args) {
  Expr e;
  e.kind = ExprKind::Transform;
  e.name = std::move(n);
  e.index = index;
  e.kids = std::move(args);
  return e;
}

bool Expr::operator==(const Expr& o) const {
  if (kind != o.kind || name != o.name || index != o.index ||
      kids.size() != o.kids.size())
    return false;
  if (kind == ExprKind::Literal && literal != o.literal) return false;
  for (size_t i = 0; i < kids.size(); ++i)
    if (!(kids[i] == o.kids[i])) return false;
  return true;
}

const ScalarDecl* PdeSystem::find_scalar(const std::string& n) const {
  for (const auto& s : scalars)
    if (s.name == n) return &s;
  return nullptr;
}
const FieldDecl* PdeSystem::find_field(const std::string& n) const {
  for (const auto& f : fields)
    if (f.name == n) return &f;
  return nullptr;
}
const TransformDecl* PdeSystem::find_transform(const std::string& n) const {
  for (const auto& t : transforms)
    if (t.name == n) return &t;
  return nullptr;
}
bool PdeSystem::is_var(const std::string& n) const {
  for (const auto& v : vars)
    if (v == n) return true;
  return false;
}

bool PdeSystem::operator==(const PdeSystem& o) const {
  auto scalar_eq = [](const ScalarDecl& a, const ScalarDecl& b) {
    return a.name == b.name && a.known == b.known &&
           (!a.known || a.value == b.value);
  };
  auto field_eq = [](const FieldDecl& a, const FieldDecl& b) {
    return a.name == b.name && a.role == b.role && a.known == b.known &&
           a.source == b.source;
  };
  if (vars != o.vars) return false;
  if (scalars.size() != o.scalars.size() || fields.size() != o.fields.size() ||
      transforms.size() != o.transforms.size() ||
      equations.size() != o.equations.size() || ics.size() != o.ics.size())
    return false;
  for (size_t i = 0; i < scalars.size(); ++i)
    if (!scalar_eq(scalars[i], o.scalars[i])) return false;
  for (size_t i = 0; i < fields.size(); ++i)
    if (!field_eq(fields[i], o.fields[i])) return false;
  for (size_t i = 0; i < transforms.size(); ++i)
    if (transforms[i].name != o.transforms[i].name ||
        transforms[i].m != o.transforms[i].m ||
        transforms[i].n != o.transforms[i].n)
      return false;
  if (domain.shape != o.domain.shape || domain.periodic != o.domain.periodic)
    return false;
  if (domain.shape == Domain::Shape::Disk &&
      (domain.cx != o.domain.cx || domain.cy != o.domain.cy ||
       domain.radius != o.domain.radius))
    return false;
  for (size_t i = 0; i < equations.size(); ++i)
    if (!(equations[i].root == o.equations[i].root) ||
        equations[i].is_bc != o.equations[i].is_bc ||
        equations[i].on.outer != o.equations[i].on.outer ||
        equations[i].on.edges != o.equations[i].on.edges)
      return false;
  for (size_t i = 0; i < ics.size(); ++i)
    if (ics[i].var != o.ics[i].var || ics[i].order != o.ics[i].order ||
        ics[i].field != o.ics[i].field)
      return false;
  return true;
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Number, String, Punct, Arrow, Caret2, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double num = 0.0;
  int line = 1, col = 1;
};

class Lexer {
public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }
  Token take() {
    Token t = cur_;
    if (cur_.kind != Tok::End) advance();
    return t;
  }

private:
  void advance() {
    skip_ws();
    cur_.line = line_;
    cur_.col = col_;
    cur_.num = 0.0;
    if (pos_ >= src_.size()) {
      cur_.kind = Tok::End;
      cur_.text = "<end of input>";
      return;
    }
    const char c = src_[pos_];
    if (std::isalpha(uchar(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(uchar(src_[pos_])) || src_[pos_] == '_'))
        bump();
      cur_.kind = Tok::Ident;
      cur_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (std::isdigit(uchar(c))) {
      size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(uchar(src_[pos_]))) bump();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        bump();
        while (pos_ < src_.size() && std::isdigit(uchar(src_[pos_]))) bump();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        size_t mark = pos_;
        int mark_line = line_, mark_col = col_;
        bump();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
          bump();
        if (pos_ < src_.size() && std::isdigit(uchar(src_[pos_]))) {
          while (pos_ < src_.size() && std::isdigit(uchar(src_[pos_]))) bump();
        } else {  // the 'e' was not an exponent
          pos_ = mark;
          line_ = mark_line;
          col_ = mark_col;
        }
      }
      cur_.kind = Tok::Number;
      cur_.text = src_.substr(start, pos_ - start);
      cur_.num = std::strtod(cur_.text.c_str(), nullptr);
      return;
    }
    if (c == '"') {
      bump();
      size_t start = pos_;
      while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n')
        bump();
      if (pos_ >= src_.size() || src_[pos_] != '"')
        throw ParseError(cur_.line, cur_.col, "unterminated string");
      cur_.kind = Tok::String;
      cur_.text = src_.substr(start, pos_ - start);
      bump();  // closing quote
      return;
    }
    if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
      bump();
      bump();
      cur_.kind = Tok::Arrow;
      cur_.text = "->";
      return;
    }
    if (c == '^') {
      if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '2') {
        bump();
        bump();
        cur_.kind = Tok::Caret2;
        cur_.text = "^2";
        return;
      }
      throw ParseError(line_, col_, "only squaring (^2) is supported");
    }
    if (std::strchr("=+-*()[],?", c)) {
      cur_.kind = Tok::Punct;
      cur_.text = std::string(1, c);
      bump();
      return;
    }
    throw ParseError(line_, col_,
                     std::string("unexpected character '") + c + "'");
  }

  void skip_ws() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        bump();
      } else {
        break;
      }
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  static unsigned char uchar(char c) { return static_cast<unsigned char>(c); }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_;
};

// Three tokens of lookahead, enough to spot `name = unknown(...)`.
class TokenStream {
public:
  explicit TokenStream(const std::string& text) : lex_(text) {
    for (auto& slot : buf_) slot = lex_.take();
  }
  const Token& peek(int k = 0) const { return buf_[k]; }
  Token take() {
    Token t = buf_[0];
    buf_[0] = buf_[1];
    buf_[1] = buf_[2];
    buf_[2] = lex_.take();
    return t;
  }

private:
  Lexer lex_;
  Token buf_[3];
};

const std::set<std::string> kReserved = {
    "var",   "scalar", "field",       "domain", "unknown",  "ic",
    "order", "on",     "left",        "right",  "bottom",   "top",
    "outer", "dt",     "dx",          "dy",     "dn",       "sin",
    "cos",   "exp10",  "log10",       "from",   "periodic", "square",
    "disk",  "coefficient", "source", "boundary", "initial"};

bool is_builtin_fn(const std::string& s) {
  return s == "dt" || s == "dx" || s == "dy" || s == "dn" || s == "sin" ||
         s == "cos" || s == "exp10" || s == "log10";
}

ExprKind builtin_kind(const std::string& s) {
  if (s == "dt") return ExprKind::Dt;
  if (s == "dx") return ExprKind::Dx;
  if (s == "dy") return ExprKind::Dy;
  if (s == "dn") return ExprKind::Dn;
  if (s == "sin") return ExprKind::Sin;
  if (s == "cos") return ExprKind::Cos;
  if (s == "exp10") return ExprKind::Exp10;
  return ExprKind::Log10;
}

// --------------------------------------------------------------------------
// Parser

class Parser {
public:
  explicit Parser(const std::string& text) : ts_(text) {}

  PdeSystem run() {
    parse_decls();
    if (ts_.peek().kind == Tok::End)
      fail(ts_.peek(), "expected at least one statement");
    while (ts_.peek().kind != Tok::End) parse_stmt();
    return std::move(sys_);
  }

private:
  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    throw ParseError(t.line, t.col, msg);
  }

  bool accept_punct(const char* p) {
    if (ts_.peek().kind == Tok::Punct && ts_.peek().text == p) {
      ts_.take();
      return true;
    }
    return false;
  }
  void expect_punct(const char* p) {
    Token t = ts_.take();
    if (t.kind != Tok::Punct || t.text != p)
      fail(t, std::string("expected '") + p + "', got '" + t.text + "'");
  }
  Token expect_ident() {
    Token t = ts_.take();
    if (t.kind != Tok::Ident)
      fail(t, "expected identifier, got '" + t.text + "'");
    return t;
  }
  bool peek_kw(const char* kw) const {
    return ts_.peek().kind == Tok::Ident && ts_.peek().text == kw;
  }
  bool peek_transform_decl() const {
    return ts_.peek(0).kind == Tok::Ident && ts_.peek(1).kind == Tok::Punct &&
           ts_.peek(1).text == "=" && ts_.peek(2).kind == Tok::Ident &&
           ts_.peek(2).text == "unknown";
  }

  void declare(const Token& name_tok) {
    const std::string& n = name_tok.text;
    if (kReserved.count(n)) fail(name_tok, "'" + n + "' is a reserved word");
    if (declared_.count(n))
      fail(name_tok, "duplicate declaration of '" + n + "'");
    declared_.insert(n);
  }

  double parse_signed_number() {
    bool neg = accept_punct("-");
    Token t = ts_.take();
    if (t.kind != Tok::Number) fail(t, "expected a number");
    return neg ? -t.num : t.num;
  }

  void parse_decls() {
    while (true) {
      if (peek_kw("var")) {
        Token kw = ts_.take();
        Token first = expect_ident();
        declare(first);
        sys_.vars.push_back(first.text);
        // Further names must sit on the same line as the `var` keyword.
        while (ts_.peek().kind == Tok::Ident && ts_.peek().line == kw.line &&
               !kReserved.count(ts_.peek().text) && !peek_transform_decl()) {
          Token t = ts_.take();
          declare(t);
          sys_.vars.push_back(t.text);
        }
      } else if (peek_kw("scalar")) {
        ts_.take();
        Token name = expect_ident();
        declare(name);
        expect_punct("=");
        ScalarDecl d;
        d.name = name.text;
        if (accept_punct("?")) {
          d.known = false;
        } else {
          d.value = parse_signed_number();
        }
        sys_.scalars.push_back(d);
      } else if (peek_kw("field")) {
        ts_.take();
        Token name = expect_ident();
        declare(name);
        FieldDecl d;
        d.name = name.text;
        Token role = expect_ident();
        if (role.text == "coefficient") d.role = FieldRole::Coefficient;
        else if (role.text == "source") d.role = FieldRole::Source;
        else if (role.text == "boundary") d.role = FieldRole::BoundaryValue;
        else if (role.text == "initial") d.role = FieldRole::InitialValue;
        else fail(role, "unknown field role '" + role.text + "'");
        if (peek_kw("from")) {
          ts_.take();
          Token src = ts_.take();
          if (src.kind != Tok::String) fail(src, "expected a quoted source");
          d.source = src.text;
        } else if (accept_punct("=")) {
          Token q = ts_.take();
          if (q.kind != Tok::Punct || q.text != "?")
            fail(q, "expected 'from \"...\"' or '= ?'");
          d.known = false;
        } else {
          fail(ts_.peek(), "expected 'from \"...\"' or '= ?'");
        }
        sys_.fields.push_back(d);
      } else if (peek_kw("domain")) {
        Token kw = ts_.take();
        if (domain_seen_) fail(kw, "domain declared twice");
        domain_seen_ = true;
        parse_domain();
      } else if (peek_transform_decl()) {
        Token name = expect_ident();
        declare(name);
        expect_punct("=");
        ts_.take();  // 'unknown'
        expect_punct("(");
        Token m = ts_.take();
        if (m.kind != Tok::Number) fail(m, "expected input arity");
        Token arrow = ts_.take();
        if (arrow.kind != Tok::Arrow) fail(arrow, "expected '->'");
        Token n = ts_.take();
        if (n.kind != Tok::Number) fail(n, "expected output arity");
        expect_punct(")");
        TransformDecl d;
        d.name = name.text;
        d.m = int(m.num);
        d.n = int(n.num);
        if (d.m < 1 || double(d.m) != m.num)
          fail(m, "transform arities must be positive integers");
        if (d.n < 1 || double(d.n) != n.num)
          fail(n, "transform arities must be positive integers");
        sys_.transforms.push_back(d);
      } else {
        return;
      }
    }
  }

  void parse_domain() {
    Token shape = expect_ident();
    if (shape.text == "square") {
      Token p = expect_ident();
      if (p.text != "periodic") fail(p, "expected 'periodic'");
      Token axis = ts_.take();
      if (axis.kind != Tok::Ident) fail(axis, "expected periodicity");
      if (axis.text == "both") sys_.domain.periodic = Periodicity::Both;
      else if (axis.text == "x") sys_.domain.periodic = Periodicity::XOnly;
      else if (axis.text == "y") sys_.domain.periodic = Periodicity::YOnly;
      else if (axis.text == "none") sys_.domain.periodic = Periodicity::None;
      else fail(axis, "periodicity must be both, x, y, or none");
      sys_.domain.shape = Domain::Shape::Square;
    } else if (shape.text == "disk") {
      expect_punct("(");
      sys_.domain.cx = parse_signed_number();
      expect_punct(",");
      sys_.domain.cy = parse_signed_number();
      expect_punct(",");
      sys_.domain.radius = parse_signed_number();
      expect_punct(")");
      if (sys_.domain.radius <= 0.0)
        fail(shape, "disk radius must be positive");
      sys_.domain.shape = Domain::Shape::Disk;
      sys_.domain.periodic = Periodicity::None;
    } else {
      fail(shape, "domain must be 'square' or 'disk'");
    }
  }

  void parse_stmt() {
    if (peek_kw("ic")) {
      ts_.take();
      Token var = expect_ident();
      InitialCondition ic;
      ic.var = var.text;
      if (accept_punct(",")) {
        Token kw = expect_ident();
        if (kw.text != "order") fail(kw, "expected 'order'");
        Token o = ts_.take();
        if (o.kind != Tok::Number || (o.num != 0.0 && o.num != 1.0))
          fail(o, "ic order must be 0 or 1");
        ic.order = int(o.num);
      }
      expect_punct("=");
      Token f = expect_ident();
      ic.field = f.text;
      if (!sys_.is_var(ic.var))
        fail(var,
             "initial condition for undeclared variable '" + ic.var + "'");
      const FieldDecl* fd = sys_.find_field(ic.field);
      if (!fd)
        fail(f, "initial condition references undeclared field '" + ic.field +
                    "'");
      if (fd->role != FieldRole::InitialValue)
        fail(f, "field '" + ic.field + "' does not have the initial role");
      for (const auto& prev : sys_.ics)
        if (prev.var == ic.var && prev.order == ic.order)
          fail(var, "duplicate initial condition for '" + ic.var + "'");
      sys_.ics.push_back(ic);
      return;
    }

    Equation eq;
    dn_seen_ = false;
    eq.root = parse_expr();
    expect_punct("=");
    Token zero = ts_.take();
    if (zero.kind != Tok::Number || zero.num != 0.0)
      fail(zero, "equations must end in '= 0'");
    if (peek_kw("on")) {
      ts_.take();
      eq.is_bc = true;
      eq.on = parse_boundary_list();
    } else if (dn_seen_) {
      throw ParseError(dn_line_, dn_col_,
                       "dn(...) is only meaningful in a boundary condition");
    }
    sys_.equations.push_back(std::move(eq));
  }

  BoundaryRef parse_boundary_list() {
    BoundaryRef b;
    while (true) {
      Token t = expect_ident();
      uint8_t bit = 0;
      if (t.text == "outer") {
        if (b.outer) fail(t, "duplicate boundary 'outer'");
        b.outer = true;
      } else if (t.text == "left") bit = kEdgeLeft;
      else if (t.text == "right") bit = kEdgeRight;
      else if (t.text == "bottom") bit = kEdgeBottom;
      else if (t.text == "top") bit = kEdgeTop;
      else fail(t, "unknown boundary '" + t.text + "'");
      if (bit) {
        if (b.edges & bit) fail(t, "duplicate boundary '" + t.text + "'");
        b.edges |= bit;
      }
      validate_boundary_token(t);
      if (!accept_punct(",")) break;
    }
    return b;
  }

  void validate_boundary_token(const Token& t) {
    const Domain& d = sys_.domain;
    if (t.text == "outer") {
      if (d.shape != Domain::Shape::Disk)
        fail(t, "'outer' requires a disk domain");
      return;
    }
    if (d.shape != Domain::Shape::Square)
      fail(t, "edge boundaries require a square domain");
    if (d.periodic == Periodicity::Both)
      fail(t, "boundary condition on a fully periodic domain");
    const bool x_edge = t.text == "left" || t.text == "right";
    if (x_edge && d.periodic == Periodicity::XOnly)
      fail(t, "'" + t.text + "' does not exist: domain is periodic along x");
    if (!x_edge && d.periodic == Periodicity::YOnly)
      fail(t, "'" + t.text + "' does not exist: domain is periodic along y");
  }

  Expr parse_expr() {
    std::vector<Expr> kids;
    const bool lead_neg = accept_punct("-");
    Expr first = parse_term();
    kids.push_back(lead_neg ? Expr::unary(ExprKind::Neg, std::move(first))
                            : std::move(first));
    while (true) {
      if (accept_punct("+")) {
        kids.push_back(parse_term());
      } else if (ts_.peek().kind == Tok::Punct && ts_.peek().text == "-") {
        ts_.take();
        kids.push_back(Expr::unary(ExprKind::Neg, parse_term()));
      } else {
        break;
      }
    }
    if (kids.size() == 1) return std::move(kids[0]);
    return Expr::add(std::move(kids));
  }

  Expr parse_term() {
    std::vector<Expr> kids;
    kids.push_back(parse_factor());
    while (accept_punct("*")) kids.push_back(parse_factor());
    if (kids.size() == 1) return std::move(kids[0]);
    return Expr::mul(std::move(kids));
  }

  Expr parse_factor() {
    Expr e = parse_primary();
    while (ts_.peek().kind == Tok::Caret2) {
      ts_.take();
      e = Expr::unary(ExprKind::Square, std::move(e));
    }
    return e;
  }

  Expr parse_primary() {
    Token t = ts_.take();
    if (t.kind == Tok::Number) return Expr::lit(t.num);
    if (t.kind == Tok::Punct && t.text == "(") {
      Expr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (t.kind != Tok::Ident)
      fail(t, "expected an expression, got '" + t.text + "'");

    if (is_builtin_fn(t.text)) {
      if (t.text == "dn" && !dn_seen_) {
        dn_seen_ = true;
        dn_line_ = t.line;
        dn_col_ = t.col;
      }
      expect_punct("(");
      Expr arg = parse_expr();
      expect_punct(")");
      return Expr::unary(builtin_kind(t.text), std::move(arg));
    }

    if (ts_.peek().kind == Tok::Punct && ts_.peek().text == "[") {
      const TransformDecl* td = sys_.find_transform(t.text);
      if (!td) fail(t, "reference to undeclared transform '" + t.text + "'");
      ts_.take();  // '['
      Token idx = ts_.take();
      if (idx.kind != Tok::Number || idx.num != std::floor(idx.num))
        fail(idx, "transform output index must be an integer");
      const int index = int(idx.num);
      if (index < 1 || index > td->n)
        fail(idx, "output index out of range for '" + t.text + "' (1.." +
                      std::to_string(td->n) + ")");
      expect_punct("]");
      expect_punct("(");
      std::vector<Expr> args;
      std::vector<std::string> arg_names;
      while (true) {
        Token a = expect_ident();
        if (!sys_.is_var(a.text))
          fail(a, "transform arguments must be declared variables");
        args.push_back(Expr::ref_var(a.text));
        arg_names.push_back(a.text);
        if (!accept_punct(",")) break;
      }
      expect_punct(")");
      if (int(args.size()) != td->m)
        fail(t, "transform '" + t.text + "' expects " + std::to_string(td->m) +
                    " argument(s), got " + std::to_string(args.size()));
      auto [it, inserted] = transform_args_.try_emplace(t.text, arg_names);
      if (!inserted && it->second != arg_names)
        fail(t, "transform '" + t.text +
                    "' referenced with different arguments than before");
      return Expr::transform(t.text, index, std::move(args));
    }

    if (sys_.is_var(t.text)) return Expr::ref_var(t.text);
    if (sys_.find_scalar(t.text)) return Expr::ref_scalar(t.text);
    if (sys_.find_field(t.text)) return Expr::ref_field(t.text);
    fail(t, "reference to undeclared symbol '" + t.text + "'");
  }

  TokenStream ts_;
  PdeSystem sys_;
  std::set<std::string> declared_;
  std::map<std::string, std::vector<std::string>> transform_args_;
  bool domain_seen_ = false;
  bool dn_seen_ = false;
  int dn_line_ = 0, dn_col_ = 0;
};

}  // namespace

PdeSystem parse_pde(const std::string& text) { return Parser(text).run(); }

// --------------------------------------------------------------------------
// Canonical printer

namespace {

// True when the node prints as a self-delimiting factor (no parens needed).
bool prints_as_factor(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Add:
    case ExprKind::Mul:
    case ExprKind::Neg:
      return false;
    default:
      return true;
  }
}

std::string print_expr(const Expr& e);

std::string print_factor(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Literal:
      return format_double(e.literal);
    case ExprKind::ScalarRef:
    case ExprKind::VarRef:
    case ExprKind::FieldRef:
      return e.name;
    case ExprKind::Dt: return "dt(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Dx: return "dx(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Dy: return "dy(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Dn: return "dn(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Sin: return "sin(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Cos: return "cos(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Exp10: return "exp10(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Log10: return "log10(" + print_expr(e.kids[0]) + ")";
    case ExprKind::Square: {
      const Expr& k = e.kids[0];
      if (prints_as_factor(k)) return print_factor(k) + "^2";
      return "(" + print_expr(k) + ")^2";
    }
    case ExprKind::Transform: {
      std::string s = e.name + "[" + std::to_string(e.index) + "](";
      for (size_t i = 0; i < e.kids.size(); ++i) {
        if (i) s += ", ";
        s += e.kids[i].name;
      }
      return s + ")";
    }
    default:
      return "(" + print_expr(e) + ")";
  }
}

std::string print_term(const Expr& e) {
  if (e.kind == ExprKind::Mul) {
    std::string s;
    for (size_t i = 0; i < e.kids.size(); ++i) {
      if (i) s += "*";
      s += print_factor(e.kids[i]);
    }
    return s;
  }
  return print_factor(e);
}

std::string print_expr(const Expr& e) {
  if (e.kind == ExprKind::Add) {
    std::string s;
    for (size_t i = 0; i < e.kids.size(); ++i) {
      const Expr& k = e.kids[i];
      if (k.kind == ExprKind::Neg) {
        s += (i == 0) ? "- " : " - ";
        s += print_term(k.kids[0]);
      } else {
        if (i) s += " + ";
        s += print_term(k);
      }
    }
    return s;
  }
  if (e.kind == ExprKind::Neg) return "- " + print_term(e.kids[0]);
  return print_term(e);
}

std::string boundary_text(const BoundaryRef& b) {
  if (b.outer) return "outer";
  std::string s;
  auto put = [&](uint8_t bit, const char* name) {
    if (b.edges & bit) {
      if (!s.empty()) s += ",";
      s += name;
    }
  };
  put(kEdgeLeft, "left");
  put(kEdgeRight, "right");
  put(kEdgeBottom, "bottom");
  put(kEdgeTop, "top");
  return s;
}

}  // namespace

std::string expr_text(const Expr& e) { return print_expr(e); }

std::string canonical_text(const PdeSystem& s) {
  std::string out;
  if (!s.vars.empty()) {
    out += "var";
    for (const auto& v : s.vars) out += " " + v;
    out += "\n";
  }
  for (const auto& sc : s.scalars) {
    out += "scalar " + sc.name + " = ";
    out += sc.known ? format_double(sc.value) : std::string("?");
    out += "\n";
  }
  for (const auto& f : s.fields) {
    out += "field " + f.name + " ";
    switch (f.role) {
      case FieldRole::Coefficient: out += "coefficient"; break;
      case FieldRole::Source: out += "source"; break;
      case FieldRole::BoundaryValue: out += "boundary"; break;
      case FieldRole::InitialValue: out += "initial"; break;
    }
    if (f.known) out += " from \"" + f.source + "\"";
    else out += " = ?";
    out += "\n";
  }
  for (const auto& t : s.transforms)
    out += t.name + " = unknown(" + std::to_string(t.m) + " -> " +
           std::to_string(t.n) + ")\n";
  if (s.domain.shape == Domain::Shape::Disk) {
    out += "domain disk(" + format_double(s.domain.cx) + ", " +
           format_double(s.domain.cy) + ", " + format_double(s.domain.radius) +
           ")\n";
  } else if (s.domain.periodic != Periodicity::Both) {
    out += "domain square periodic ";
    switch (s.domain.periodic) {
      case Periodicity::XOnly: out += "x"; break;
      case Periodicity::YOnly: out += "y"; break;
      case Periodicity::None: out += "none"; break;
      default: break;
    }
    out += "\n";
  }
  for (const auto& eq : s.equations) {
    out += print_expr(eq.root) + " = 0";
    if (eq.is_bc) out += " on " + boundary_text(eq.on);
    out += "\n";
  }
  for (const auto& ic : s.ics) {
    out += "ic " + ic.var;
    if (ic.order == 1) out += ", order 1";
    out += " = " + ic.field + "\n";
  }
  return out;
}

}  // namespace gpde
