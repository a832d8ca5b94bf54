#include "frobflat/fieldspec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace frobflat {

namespace {

struct Token {
  enum Kind { Num, Ident, Op, End } kind = End;
  std::string text;
  double value = 0;
  bool imag = false;
  bool integer = false;
  int col = 1;
};

std::vector<Token> lex(const std::string& s, int line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = s[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    Token t;
    t.col = static_cast<int>(i) + 1;
    if (std::isdigit(c) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      size_t j = i;
      bool integer = true;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && s[j] == '.') {
        integer = false;
        ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      }
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          integer = false;
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      t.kind = Token::Num;
      t.text = s.substr(i, j - i);
      t.value = std::strtod(t.text.c_str(), nullptr);
      if (!std::isfinite(t.value)) throw SpecError("number '" + t.text + "' is out of range", line, t.col);
      t.integer = integer;
      if (j < s.size() && s[j] == 'i' &&
          (j + 1 == s.size() || !(std::isalnum(static_cast<unsigned char>(s[j + 1])) || s[j + 1] == '_'))) {
        t.imag = true;
        t.integer = false;
        ++j;
      }
      i = j;
    } else if (std::isalpha(c) || c == '_') {
      size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      t.kind = Token::Ident;
      t.text = s.substr(i, j - i);
      i = j;
    } else if (std::string("+-*^()=").find(static_cast<char>(c)) != std::string::npos) {
      t.kind = Token::Op;
      t.text = std::string(1, static_cast<char>(c));
      ++i;
    } else {
      std::string shown = c < 0x80 ? std::string(1, static_cast<char>(c)) : "non-ASCII byte";
      throw SpecError("unexpected character '" + shown + "'", line, t.col);
    }
    out.push_back(t);
  }
  Token end;
  end.col = static_cast<int>(s.size()) + 1;
  out.push_back(end);
  return out;
}

// name followed by a positive index, e.g. zb12
bool split_symbol(const std::string& s, const std::string& prefix, int& index) {
  if (s.size() <= prefix.size() || s.compare(0, prefix.size(), prefix) != 0) return false;
  const std::string digits = s.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return false;
  if (digits[0] == '0' || digits.size() > 6) return false;
  index = std::stoi(digits);
  return true;
}

struct Use {
  std::string name;
  int index, line, col;
};

ExprPtr node(Expr::Kind k, std::vector<ExprPtr> args = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->args = std::move(args);
  return e;
}

// Recursive descent; `deg` is the degree in the basis symbols (0 or 1).
class Parser {
public:
  Parser(std::vector<Token> toks, int line, std::vector<Use>& uses) : t_(std::move(toks)), line_(line), uses_(uses) {}

  const Token& peek() const { return t_[pos_]; }
  bool is_op(const char* op) const { return peek().kind == Token::Op && peek().text == op; }
  Token take() { return t_[pos_++]; }
  [[noreturn]] void fail(const std::string& msg, const Token& at) const { throw SpecError(msg, line_, at.col); }
  [[noreturn]] void fail_here(const std::string& what) const {
    if (peek().kind == Token::End) fail(what + " at end of line", peek());
    fail(what + ", found '" + peek().text + "'", peek());
  }

  ExprPtr expr(int& deg) {
    ExprPtr a = term(deg);
    while (is_op("+") || is_op("-")) {
      Token op = take();
      int d2 = 0;
      ExprPtr b = term(d2);
      if (d2 != deg) fail("every term of a field needs exactly one basis symbol", op);
      a = node(op.text == "+" ? Expr::Add : Expr::Sub, {a, b});
    }
    return a;
  }

  ExprPtr term(int& deg) {
    ExprPtr a = unary(deg);
    while (is_op("*")) {
      Token op = take();
      int d2 = 0;
      ExprPtr b = unary(d2);
      if (deg + d2 > 1) fail("product of two basis symbols", op);
      deg += d2;
      a = node(Expr::Mul, {a, b});
    }
    return a;
  }

  ExprPtr unary(int& deg) {
    if (is_op("-")) {
      take();
      return node(Expr::Neg, {unary(deg)});
    }
    return power(deg);
  }

  ExprPtr power(int& deg) {
    ExprPtr a = atom(deg);
    if (!is_op("^")) return a;
    Token op = take();
    const Token& e = peek();
    if (e.kind != Token::Num || !e.integer) {
      if (e.kind == Token::End) fail("expected an exponent at end of line", e);
      fail("non-polynomial construct: exponent '" + e.text + "' is not a non-negative integer", e);
    }
    take();
    if (e.value > 64) fail("exponent " + e.text + " is too large", e);
    const int k = static_cast<int>(e.value);
    if (deg == 1 && k != 1) fail("power of a basis symbol", op);
    auto p = std::make_shared<Expr>();
    p->kind = Expr::Pow;
    p->index = k;
    p->args = {a};
    return p;
  }

  ExprPtr atom(int& deg) {
    deg = 0;
    const Token tok = peek();
    if (tok.kind == Token::Num) {
      take();
      auto e = std::make_shared<Expr>();
      e->kind = tok.imag ? Expr::Imag : Expr::Real;
      e->value = tok.value;
      return e;
    }
    if (is_op("(")) {
      take();
      ExprPtr e = expr(deg);
      if (!is_op(")")) fail_here("expected ')'");
      take();
      return e;
    }
    if (tok.kind == Token::Ident) {
      take();
      const std::string& s = tok.text;
      if (s == "i") {
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Imag;
        e->value = 1.0;
        return e;
      }
      int idx = 0;
      // longest prefix first: dzb before dz, zb before z
      for (const char* b : {"dzb", "dz", "dt"})
        if (split_symbol(s, b, idx)) {
          deg = 1;
          return symbol(Expr::Basis, b, idx, tok);
        }
      for (const char* v : {"zb", "z", "t"})
        if (split_symbol(s, v, idx)) return symbol(Expr::Var, v, idx, tok);
      if (is_op("(")) fail("non-polynomial construct '" + s + "'", tok);
      fail("unknown symbol '" + s + "'", tok);
    }
    fail_here("expected an expression");
  }

  ExprPtr symbol(Expr::Kind k, const char* name, int idx, const Token& tok) {
    if (is_op("(")) fail("non-polynomial construct '" + tok.text + "(...)'", tok);
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->name = name;
    e->index = idx;
    uses_.push_back({name, idx, line_, tok.col});
    return e;
  }

  size_t pos_ = 0;

private:
  std::vector<Token> t_;
  int line_;
  std::vector<Use>& uses_;
};

int prec(const Expr& e) {
  switch (e.kind) {
    case Expr::Add:
    case Expr::Sub: return 1;
    case Expr::Mul: return 2;
    case Expr::Neg: return 3;
    case Expr::Pow: return 4;
    default: return 5;
  }
}

void print(std::ostream& os, const Expr& e);

void print_child(std::ostream& os, const Expr& c, int min_prec) {
  if (prec(c) < min_prec) {
    os << '(';
    print(os, c);
    os << ')';
  } else {
    print(os, c);
  }
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print(std::ostream& os, const Expr& e) {
  switch (e.kind) {
    case Expr::Real: os << number(e.value); break;
    case Expr::Imag: os << number(e.value) << 'i'; break;
    case Expr::Var:
    case Expr::Basis: os << e.name << e.index; break;
    case Expr::Add:
    case Expr::Sub:
      print_child(os, *e.args[0], 1);
      os << (e.kind == Expr::Add ? " + " : " - ");
      print_child(os, *e.args[1], 2);
      break;
    case Expr::Mul:
      print_child(os, *e.args[0], 2);
      os << '*';
      print_child(os, *e.args[1], 3);
      break;
    case Expr::Neg:
      os << '-';
      print_child(os, *e.args[0], 3);
      break;
    case Expr::Pow:
      print_child(os, *e.args[0], 5);
      os << '^' << e.index;
      break;
  }
}

// Value of an expression: coefficients on the N basis slots, or a scalar in slot N.
struct Value {
  std::vector<PowerSeries> c;
  bool vec = false;
};

PowerSeries checked_mul(const PowerSeries& a, const PowerSeries& b, int dmax) {
  double dropped = 0;
  PowerSeries p = mul(a, b, &dropped);
  if (dropped > 0)
    throw PreconditionError("a coefficient has degree above dmax = " + std::to_string(dmax), "parse");
  return p;
}

Value eval(const Expr& e, int r, int n, int D) {
  const int N = r + 2 * n;
  Value v;
  v.c.assign(N + 1, PowerSeries(N, D));
  switch (e.kind) {
    case Expr::Real: v.c[N] = PowerSeries::constant(N, D, e.value); return v;
    case Expr::Imag: v.c[N] = PowerSeries::constant(N, D, cplx(0, e.value)); return v;
    case Expr::Var: {
      const int k = e.index - 1;
      if (e.name == "t") v.c[N] = PowerSeries::variable(N, D, k);
      else {
        const double s = e.name == "z" ? 1.0 : -1.0;
        v.c[N] = PowerSeries::variable(N, D, r + k) + PowerSeries::variable(N, D, r + n + k, cplx(0, s));
      }
      return v;
    }
    case Expr::Basis: {
      const int k = e.index - 1;
      const int slot = e.name == "dt" ? k : e.name == "dz" ? r + k : r + n + k;
      v.vec = true;
      v.c[slot] = PowerSeries::constant(N, D, 1.0);
      return v;
    }
    case Expr::Add:
    case Expr::Sub: {
      Value a = eval(*e.args[0], r, n, D), b = eval(*e.args[1], r, n, D);
      for (int i = 0; i <= N; ++i) a.c[i] = e.kind == Expr::Add ? a.c[i] + b.c[i] : a.c[i] - b.c[i];
      a.vec = a.vec || b.vec;
      return a;
    }
    case Expr::Neg: {
      Value a = eval(*e.args[0], r, n, D);
      for (auto& s : a.c) s = -s;
      return a;
    }
    case Expr::Mul: {
      Value a = eval(*e.args[0], r, n, D), b = eval(*e.args[1], r, n, D);
      if (a.vec) std::swap(a, b);
      // a is scalar here
      for (int i = 0; i <= N; ++i) b.c[i] = checked_mul(a.c[N], b.c[i], D);
      if (b.vec) b.c[N] = PowerSeries(N, D);
      return b;
    }
    case Expr::Pow: {
      Value a = eval(*e.args[0], r, n, D);
      if (a.vec) return a;  // exponent 1
      PowerSeries p = PowerSeries::constant(N, D, 1.0);
      for (int i = 0; i < e.index; ++i) p = checked_mul(p, a.c[N], D);
      a.c[N] = p;
      return a;
    }
  }
  return v;
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.value != b.value || a.name != b.name || a.index != b.index ||
      a.args.size() != b.args.size())
    return false;
  for (size_t i = 0; i < a.args.size(); ++i)
    if (!(*a.args[i] == *b.args[i])) return false;
  return true;
}

bool operator==(const FieldSpec& a, const FieldSpec& b) {
  if (a.r != b.r || a.n != b.n || a.fields.size() != b.fields.size()) return false;
  for (size_t i = 0; i < a.fields.size(); ++i) {
    const FieldDef &f = a.fields[i], &g = b.fields[i];
    if (f.kind != g.kind || f.index != g.index || !(*f.expr == *g.expr)) return false;
  }
  return true;
}

FieldSpec parse_field_spec(const std::string& text) {
  FieldSpec spec;
  int r = -1, n = -1;
  std::vector<Use> uses;
  struct Placed {
    FieldDef def;
    int line;
  };
  std::vector<Placed> defs;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = raw.substr(0, raw.find('#'));
    std::vector<Token> toks = lex(s, line);
    if (toks.size() == 1) continue;
    if (toks[0].kind != Token::Ident) throw SpecError("expected a field name", line, toks[0].col);
    if (toks[1].kind != Token::Op || toks[1].text != "=")
      throw SpecError(toks[1].kind == Token::End ? "expected '=' at end of line" : "expected '='", line, toks[1].col);
    const std::string name = toks[0].text;
    if (name == "r" || name == "n") {
      const Token& v = toks[2];
      if (v.kind != Token::Num || !v.integer || v.value > 64)
        throw SpecError("expected a small non-negative integer after '" + name + " ='", line, v.col);
      if (toks[3].kind != Token::End) throw SpecError("unexpected '" + toks[3].text + "'", line, toks[3].col);
      int& slot = name == "r" ? r : n;
      if (slot >= 0) throw SpecError("'" + name + "' declared twice", line, toks[0].col);
      slot = static_cast<int>(v.value);
      continue;
    }
    FieldDef def;
    if (!split_symbol(name, "X", def.index) && !split_symbol(name, "L", def.index))
      throw SpecError("unknown field name '" + name + "'; expected Xk or Lj", line, toks[0].col);
    def.kind = name[0];
    const int body_col = toks[2].col;
    Parser p(std::move(toks), line, uses);
    p.pos_ = 2;
    int deg = 0;
    def.expr = p.expr(deg);
    if (p.peek().kind != Token::End) p.fail_here("expected an operator");
    if (deg != 1) throw SpecError("field " + name + " names no basis symbol", line, body_col);
    defs.push_back({def, line});
  }

  int nx = 0, nl = 0;
  for (const auto& d : defs) (d.def.kind == 'X' ? nx : nl) = std::max(d.def.kind == 'X' ? nx : nl, d.def.index);
  spec.r = r >= 0 ? r : nx;
  spec.n = n >= 0 ? n : nl;
  if (spec.r + spec.n == 0) throw SpecError("no fields", line + 1, 1);
  std::map<std::pair<char, int>, int> seen;
  for (const auto& d : defs) {
    const int limit = d.def.kind == 'X' ? spec.r : spec.n;
    if (d.def.index > limit)
      throw SpecError(std::string("field ") + d.def.kind + std::to_string(d.def.index) + " exceeds the declared " +
                          (d.def.kind == 'X' ? "r = " : "n = ") + std::to_string(limit),
                      d.line, 1);
    if (seen.count({d.def.kind, d.def.index}))
      throw SpecError(std::string("field ") + d.def.kind + std::to_string(d.def.index) + " defined twice", d.line, 1);
    seen[{d.def.kind, d.def.index}] = d.line;
  }
  for (char k : {'X', 'L'})
    for (int i = 1; i <= (k == 'X' ? spec.r : spec.n); ++i)
      if (!seen.count({k, i}))
        throw SpecError(std::string("missing field ") + k + std::to_string(i), line + 1, 1);
  for (const auto& u : uses) {
    const bool real = u.name == "t" || u.name == "dt";
    const int limit = real ? spec.r : spec.n;
    if (u.index > limit)
      throw SpecError("symbol '" + u.name + std::to_string(u.index) + "' is outside r = " + std::to_string(spec.r) +
                          ", n = " + std::to_string(spec.n),
                      u.line, u.col);
  }
  std::sort(defs.begin(), defs.end(), [](const Placed& a, const Placed& b) {
    return std::make_pair(a.def.kind != 'X', a.def.index) < std::make_pair(b.def.kind != 'X', b.def.index);
  });
  for (auto& d : defs) spec.fields.push_back(d.def);
  return spec;
}

std::string to_text(const Expr& e) {
  std::ostringstream os;
  print(os, e);
  return os.str();
}

std::string to_text(const FieldSpec& s) {
  std::ostringstream os;
  os << "r = " << s.r << "\nn = " << s.n << "\n";
  for (const auto& f : s.fields) os << f.kind << f.index << " = " << to_text(*f.expr) << "\n";
  return os.str();
}

SpecFields to_fields(const FieldSpec& s, int dmax) {
  const int N = s.r + 2 * s.n;
  SpecFields out;
  for (const auto& f : s.fields) {
    Value v = eval(*f.expr, s.r, s.n, dmax);
    VectorField vf(s.r, s.n, dmax);
    for (int i = 0; i < N; ++i) {
      v.c[i].prune();
      vf.c[i] = v.c[i];
    }
    (f.kind == 'X' ? out.X : out.L).push_back(vf);
  }
  return out;
}

}  // namespace frobflat
