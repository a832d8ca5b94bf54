#pragma once

#include <memory>
#include <string>
#include <vector>

#include "frobflat/errors.hpp"
#include "frobflat/frames.hpp"

namespace frobflat {

// Lexical, syntax and symbol errors; line and column are 1-based.
class SpecError : public PreconditionError {
public:
  SpecError(const std::string& msg, int line, int col)
      : PreconditionError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg, "parse"),
        line_(line), col_(col) {}
  int line() const { return line_; }
  int column() const { return col_; }

private:
  int line_, col_;
};

struct Expr {
  enum Kind { Real, Imag, Var, Basis, Add, Sub, Mul, Pow, Neg };
  // Var: t, z, zb. Basis: dt, dz, dzb.
  Kind kind = Real;
  double value = 0.0;  // Real, Imag
  std::string name;    // Var, Basis
  int index = 0;       // Var, Basis (1-based); Pow exponent
  std::vector<std::shared_ptr<const Expr>> args;
};
using ExprPtr = std::shared_ptr<const Expr>;

bool operator==(const Expr& a, const Expr& b);

struct FieldDef {
  char kind = 'X';  // 'X' or 'L'
  int index = 1;
  ExprPtr expr;
};

// Text: optional "r = N" / "n = N" lines, then "Xk = ..." and "Lj = ..."
// with coefficient polynomials in t_k, z_j, zb_j times dt_k, dz_j, dzb_j.
// '#' starts a comment. Without declarations r and n are inferred.
struct FieldSpec {
  int r = 0, n = 0;
  std::vector<FieldDef> fields;  // X1..Xr, then L1..Ln
};

bool operator==(const FieldSpec& a, const FieldSpec& b);

FieldSpec parse_field_spec(const std::string& text);
std::string to_text(const FieldSpec& s);
std::string to_text(const Expr& e);

struct SpecFields {
  std::vector<VectorField> X, L;
};
// Coefficients become power series in (t, x, y) with z = x + iy, capped at dmax.
SpecFields to_fields(const FieldSpec& s, int dmax);

}  // namespace frobflat
