#include "frobflat/frames.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "frobflat/json_io.hpp"

namespace frobflat {

// ---------------------------------------------------------------- SeriesMatrix

SeriesMatrix::SeriesMatrix(int r, int c, int dim, int dmax) : rows(r), cols(c) {
  e.assign(static_cast<size_t>(r) * c, PowerSeries(dim, dmax));
}

SeriesMatrix SeriesMatrix::identity(int n, int dim, int dmax) {
  SeriesMatrix m(n, n, dim, dmax);
  for (int i = 0; i < n; ++i) m(i, i) = PowerSeries::constant(dim, dmax, 1.0);
  return m;
}

SeriesMatrix SeriesMatrix::constant(const Eigen::MatrixXcd& a, int dim, int dmax) {
  SeriesMatrix m(static_cast<int>(a.rows()), static_cast<int>(a.cols()), dim, dmax);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m(i, j) = PowerSeries::constant(dim, dmax, a(i, j));
  return m;
}

int SeriesMatrix::dmax() const {
  int d = e.empty() ? -1 : e[0].dmax();
  for (const auto& s : e) d = std::min(d, s.dmax());
  return d;
}

Eigen::MatrixXcd SeriesMatrix::at_zero() const {
  Eigen::MatrixXcd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (*this)(i, j).at_zero();
  return m;
}

Eigen::MatrixXcd SeriesMatrix::eval(const std::vector<cplx>& x) const {
  Eigen::MatrixXcd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (*this)(i, j).eval(x);
  return m;
}

SeriesMatrix SeriesMatrix::truncated(int d) const {
  SeriesMatrix m = *this;
  for (auto& s : m.e) s = s.truncated(std::min(d, s.dmax()));
  return m;
}

SeriesMatrix SeriesMatrix::block(int r0, int c0, int nr, int nc) const {
  SeriesMatrix m;
  m.rows = nr;
  m.cols = nc;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) m.e.push_back((*this)(r0 + i, c0 + j));
  return m;
}

double SeriesMatrix::max_abs() const {
  double m = 0;
  for (const auto& s : e) m = std::max(m, s.max_abs());
  return m;
}

double SeriesMatrix::anorm(double radius) const {
  if (e.empty()) return 0.0;
  const int d = dmax();
  const Layout& L = *Layout::get(dim(), d);
  double total = 0;
  for (int a = 0; a < L.size(); ++a) {
    double best = 0;
    for (int i = 0; i < rows; ++i) {
      double row = 0;
      for (int j = 0; j < cols; ++j) row += std::abs((*this)(i, j).coeff(a));
      best = std::max(best, row);
    }
    total += best * std::pow(radius, L.degree(a));
  }
  return total;
}

namespace {

void same_shape(const SeriesMatrix& a, const SeriesMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("series matrices differ in shape");
}

}  // namespace

SeriesMatrix operator+(const SeriesMatrix& a, const SeriesMatrix& b) {
  same_shape(a, b);
  SeriesMatrix m = a;
  for (size_t i = 0; i < m.e.size(); ++i) m.e[i] = add_lowest(a.e[i], b.e[i]);
  return m;
}

SeriesMatrix operator-(const SeriesMatrix& a, const SeriesMatrix& b) {
  same_shape(a, b);
  SeriesMatrix m = a;
  for (size_t i = 0; i < m.e.size(); ++i) m.e[i] = add_lowest(a.e[i], -b.e[i]);
  return m;
}

SeriesMatrix operator*(const SeriesMatrix& a, const SeriesMatrix& b) {
  if (a.cols != b.rows) throw ShapeError("series matrix product shape mismatch");
  if (a.rows == 0 || b.cols == 0) {
    SeriesMatrix m;
    m.rows = a.rows;
    m.cols = b.cols;
    return m;
  }
  const int d = std::min(a.dmax(), b.dmax());
  const int dim = a.e.empty() ? b.dim() : a.dim();
  SeriesMatrix at = a.truncated(d), bt = b.truncated(d);
  SeriesMatrix m(a.rows, b.cols, dim, d);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      if (at(i, k).is_zero()) continue;
      for (int j = 0; j < b.cols; ++j)
        if (!bt(k, j).is_zero()) m(i, j) += mul(at(i, k), bt(k, j));
    }
  return m;
}

SeriesMatrix operator*(const Eigen::MatrixXcd& a, const SeriesMatrix& b) {
  if (a.cols() != b.rows) throw ShapeError("constant-by-series product shape mismatch");
  if (a.rows() == 0 || b.cols == 0) {
    SeriesMatrix m;
    m.rows = static_cast<int>(a.rows());
    m.cols = b.cols;
    return m;
  }
  SeriesMatrix m(static_cast<int>(a.rows()), b.cols, b.dim(), b.dmax());
  for (int i = 0; i < m.rows; ++i)
    for (int k = 0; k < b.rows; ++k) {
      if (a(i, k) == cplx(0)) continue;
      for (int j = 0; j < b.cols; ++j) m(i, j) += a(i, k) * b(k, j).truncated(m.dmax());
    }
  return m;
}

SeriesMatrix operator*(const SeriesMatrix& a, const Eigen::MatrixXcd& b) {
  return transpose(b.transpose() * transpose(a));
}

SeriesMatrix hstack(const SeriesMatrix& a, const SeriesMatrix& b) {
  if (a.rows != b.rows) throw ShapeError("hstack row mismatch");
  SeriesMatrix m;
  m.rows = a.rows;
  m.cols = a.cols + b.cols;
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) m.e.push_back(a(i, j));
    for (int j = 0; j < b.cols; ++j) m.e.push_back(b(i, j));
  }
  return m;
}

SeriesMatrix vstack(const SeriesMatrix& a, const SeriesMatrix& b) {
  if (a.cols != b.cols) throw ShapeError("vstack column mismatch");
  SeriesMatrix m = a;
  m.rows += b.rows;
  m.e.insert(m.e.end(), b.e.begin(), b.e.end());
  return m;
}

SeriesMatrix transpose(const SeriesMatrix& a) {
  SeriesMatrix m;
  m.rows = a.cols;
  m.cols = a.rows;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m.e.push_back(a(j, i));
  return m;
}

SeriesMatrix conj_coeffs(const SeriesMatrix& a) {
  SeriesMatrix m = a;
  for (auto& s : m.e) s = s.conj_coeffs();
  return m;
}

SeriesMatrix compose(const SeriesMatrix& a, const SeriesMap& g, ComposeOptions opt) {
  std::vector<const PowerSeries*> ptr;
  for (const auto& s : a.e) ptr.push_back(&s);
  SeriesMatrix m;
  m.rows = a.rows;
  m.cols = a.cols;
  m.e = compose_many(ptr, g, opt);
  return m;
}

SeriesMatrix inverse(const SeriesMatrix& s, double sigma_min) {
  if (s.rows != s.cols) throw ShapeError("inverse of a non-square series matrix");
  Eigen::MatrixXcd s0 = s.at_zero();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(s0);
  const double smin = s.rows ? svd.singularValues()(s.rows - 1) : 1.0;
  if (smin < sigma_min) throw SingularityError("series matrix is singular at 0", smin);
  Eigen::MatrixXcd s0i = s0.inverse();
  const int d = s.dmax(), dim = s.dim();
  // T = -S0^{-1} (S - S0) vanishes at 0, so T^k only matters for k <= d
  SeriesMatrix T = (-s0i) * (s - SeriesMatrix::constant(s0, dim, d));
  SeriesMatrix acc = SeriesMatrix::identity(s.rows, dim, d), pw = acc;
  for (int k = 1; k <= d; ++k) {
    pw = pw * T;
    if (pw.max_abs() == 0.0) break;
    acc = acc + pw;
  }
  return acc * s0i;
}

SeriesMatrix jacobian(const SeriesMap& f) {
  f.check();
  SeriesMatrix J;
  J.rows = f.d_out();
  J.cols = f.d_in();
  for (int i = 0; i < J.rows; ++i)
    for (int k = 0; k < J.cols; ++k) J.e.push_back(differentiate(f[i], k));
  return J;
}

// ---------------------------------------------------------------- VectorField

VectorField::VectorField(int r_, int n_, int dmax) : r(r_), n(n_) {
  c.assign(r + 2 * n, PowerSeries(r + 2 * n, dmax));
}

VectorField VectorField::basis(int r, int n, int dmax, int slot, cplx scale) {
  VectorField v(r, n, dmax);
  v.c.at(slot) = PowerSeries::constant(r + 2 * n, dmax, scale);
  return v;
}

int VectorField::dmax() const {
  int d = c.empty() ? -1 : c[0].dmax();
  for (const auto& s : c) d = std::min(d, s.dmax());
  return d;
}

void VectorField::check() const {
  if (static_cast<int>(c.size()) != r + 2 * n) throw ShapeError("vector field has the wrong component count");
  for (const auto& s : c)
    if (s.dim() != r + 2 * n) throw ShapeError("vector field coefficient has the wrong dimension");
}

std::vector<cplx> VectorField::eval(const std::vector<double>& x) const {
  std::vector<cplx> z(x.begin(), x.end()), out;
  for (const auto& s : c) out.push_back(s.eval(z));
  return out;
}

std::vector<cplx> VectorField::at_zero() const {
  std::vector<cplx> out;
  for (const auto& s : c) out.push_back(s.at_zero());
  return out;
}

VectorField VectorField::truncated(int d) const {
  VectorField v = *this;
  for (auto& s : v.c) s = s.truncated(std::min(d, s.dmax()));
  return v;
}

VectorField VectorField::conjugate() const {
  VectorField v = *this;
  for (int k = 0; k < r; ++k) v.c[k] = c[k].conj_coeffs();
  for (int j = 0; j < n; ++j) {
    v.c[r + j] = c[r + n + j].conj_coeffs();
    v.c[r + n + j] = c[r + j].conj_coeffs();
  }
  return v;
}

VectorField operator+(const VectorField& a, const VectorField& b) {
  if (a.r != b.r || a.n != b.n) throw ShapeError("vector fields of different shapes");
  VectorField v = a;
  for (size_t i = 0; i < v.c.size(); ++i) v.c[i] = add_lowest(a.c[i], b.c[i]);
  return v;
}

VectorField operator-(const VectorField& a, const VectorField& b) { return a + (-1.0 * b); }

VectorField operator*(cplx s, const VectorField& a) {
  VectorField v = a;
  for (auto& x : v.c) x *= s;
  return v;
}

VectorField multiply(const PowerSeries& f, const VectorField& v) {
  VectorField w = v;
  for (auto& x : w.c) x = mul_lowest(f, x);
  return w;
}

double max_diff(const VectorField& a, const VectorField& b) {
  if (a.c.size() != b.c.size()) throw ShapeError("vector fields of different shapes");
  double m = 0;
  for (size_t i = 0; i < a.c.size(); ++i) {
    const int d = std::min(a.c[i].dmax(), b.c[i].dmax());
    PowerSeries x = a.c[i].truncated(d) - b.c[i].truncated(d);
    m = std::max(m, x.max_abs());
  }
  return m;
}

std::vector<PowerSeries> to_real_basis(const VectorField& v) {
  v.check();
  std::vector<PowerSeries> xi(v.c.begin(), v.c.end());
  const cplx I(0, 1);
  for (int j = 0; j < v.n; ++j) {
    const PowerSeries& b = v.c[v.r + j];
    const PowerSeries& c = v.c[v.r + v.n + j];
    xi[v.r + j] = 0.5 * add_lowest(b, c);
    xi[v.r + v.n + j] = (0.5 * I) * add_lowest(c, -b);
  }
  return xi;
}

VectorField from_real_basis(int r, int n, const std::vector<PowerSeries>& xi) {
  if (static_cast<int>(xi.size()) != r + 2 * n) throw ShapeError("real-basis field has the wrong size");
  VectorField v;
  v.r = r;
  v.n = n;
  v.c = xi;
  const cplx I(0, 1);
  for (int j = 0; j < n; ++j) {
    const PowerSeries& x = xi[r + j];
    const PowerSeries& y = xi[r + n + j];
    v.c[r + j] = add_lowest(x, I * y);
    v.c[r + n + j] = add_lowest(x, -I * y);
  }
  return v;
}

Eigen::VectorXcd to_real_basis(int r, int n, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd xi = v;
  const cplx I(0, 1);
  for (int j = 0; j < n; ++j) {
    xi(r + j) = 0.5 * (v(r + j) + v(r + n + j));
    xi(r + n + j) = 0.5 * I * (v(r + n + j) - v(r + j));
  }
  return xi;
}

Eigen::VectorXcd from_real_basis(int r, int n, const Eigen::VectorXcd& xi) {
  Eigen::VectorXcd v = xi;
  const cplx I(0, 1);
  for (int j = 0; j < n; ++j) {
    v(r + j) = xi(r + j) + I * xi(r + n + j);
    v(r + n + j) = xi(r + j) - I * xi(r + n + j);
  }
  return v;
}

PowerSeries apply(const VectorField& v, const PowerSeries& f) {
  v.check();
  if (f.dim() != v.size()) throw ShapeError("function and field live in different dimensions");
  const int d = std::min(v.dmax(), f.dmax()) - 1;
  if (d < 0) throw ShapeError("applying a field needs degree cap >= 1");
  PowerSeries out(f.dim(), d);
  for (int k = 0; k < v.r; ++k)
    if (!v.c[k].is_zero()) out += mul(v.c[k].truncated(d), differentiate(f, k).truncated(d));
  for (int j = 0; j < v.n; ++j) {
    if (!v.c[v.r + j].is_zero())
      out += mul(v.c[v.r + j].truncated(d), wirtinger(f, v.r, v.n, j, Wirt::dz).truncated(d));
    if (!v.c[v.r + v.n + j].is_zero())
      out += mul(v.c[v.r + v.n + j].truncated(d), wirtinger(f, v.r, v.n, j, Wirt::dzbar).truncated(d));
  }
  return out;
}

VectorField commutator(const VectorField& v, const VectorField& w) {
  if (v.r != w.r || v.n != w.n) throw ShapeError("commutator of fields with different shapes");
  VectorField out;
  out.r = v.r;
  out.n = v.n;
  for (int i = 0; i < v.size(); ++i) out.c.push_back(apply(v, w.c[i]) - apply(w, v.c[i]));
  return out;
}

VectorField pullback(const SeriesMap& phi, const VectorField& z) {
  phi.check();
  z.check();
  if (phi.d_in() != z.size() || phi.d_out() != z.size()) throw ShapeError("chart and field dimensions differ");
  for (const auto& c : phi.comps)
    if (std::abs(c.at_zero()) > 1e-14) throw PreconditionError("pullback needs Phi(0) = 0");
  std::vector<PowerSeries> xi = to_real_basis(z);
  std::vector<const PowerSeries*> ptr;
  for (const auto& s : xi) ptr.push_back(&s);
  std::vector<PowerSeries> xphi = compose_many(ptr, phi);
  SeriesMatrix col;
  col.rows = z.size();
  col.cols = 1;
  col.e = xphi;
  SeriesMatrix eta = inverse(jacobian(phi)) * col;
  return from_real_basis(z.r, z.n, eta.e);
}

VectorField pushforward(const SeriesMap& phi, const VectorField& z) { return pullback(invert_map(phi), z); }

// ---------------------------------------------------------------- Frame

Frame Frame::zero(int r, int n, int dmax) {
  const int dim = r + 2 * n;
  Frame f;
  f.r = r;
  f.n = n;
  f.A = SeriesMatrix(r, r, dim, dmax);
  f.B = SeriesMatrix(r, n, dim, dmax);
  f.E = SeriesMatrix(r, n, dim, dmax);
  f.C = SeriesMatrix(n, r, dim, dmax);
  f.D = SeriesMatrix(n, n, dim, dmax);
  f.F = SeriesMatrix(n, n, dim, dmax);
  return f;
}

Frame Frame::from_fields(const std::vector<VectorField>& X, const std::vector<VectorField>& L) {
  const int r = static_cast<int>(X.size()), n = static_cast<int>(L.size());
  int d = 1 << 20;
  for (const auto& v : X) {
    if (v.r != r || v.n != n) throw ShapeError("field shapes do not match the frame size");
    d = std::min(d, v.dmax());
  }
  for (const auto& v : L) {
    if (v.r != r || v.n != n) throw ShapeError("field shapes do not match the frame size");
    d = std::min(d, v.dmax());
  }
  Frame f = zero(r, n, d);
  const int dim = r + 2 * n;
  PowerSeries one = PowerSeries::constant(dim, d, 1.0);
  for (int k = 0; k < r; ++k) {
    VectorField v = X[k].truncated(d);
    for (int i = 0; i < r; ++i) f.A(k, i) = i == k ? v.c[i] - one : v.c[i];
    for (int j = 0; j < n; ++j) {
      f.B(k, j) = v.c[r + j];
      f.E(k, j) = v.c[r + n + j];
    }
  }
  for (int j = 0; j < n; ++j) {
    VectorField v = L[j].truncated(d);
    for (int i = 0; i < r; ++i) f.C(j, i) = v.c[i];
    for (int l = 0; l < n; ++l) {
      f.D(j, l) = v.c[r + l];
      f.F(j, l) = l == j ? v.c[r + n + l] - one : v.c[r + n + l];
    }
  }
  return f;
}

int Frame::dmax() const {
  int d = 1 << 20;
  for (const SeriesMatrix* m : {&A, &B, &C, &D, &E, &F})
    if (!m->e.empty()) d = std::min(d, m->dmax());
  return d;
}

std::vector<VectorField> Frame::X() const {
  const int d = dmax(), dim = r + 2 * n;
  std::vector<VectorField> out;
  for (int k = 0; k < r; ++k) {
    VectorField v(r, n, d);
    for (int i = 0; i < r; ++i) v.c[i] = A(k, i).truncated(d);
    v.c[k] += PowerSeries::constant(dim, d, 1.0);
    for (int j = 0; j < n; ++j) {
      v.c[r + j] = B(k, j).truncated(d);
      v.c[r + n + j] = E(k, j).truncated(d);
    }
    out.push_back(v);
  }
  return out;
}

std::vector<VectorField> Frame::L() const {
  const int d = dmax(), dim = r + 2 * n;
  std::vector<VectorField> out;
  for (int j = 0; j < n; ++j) {
    VectorField v(r, n, d);
    for (int i = 0; i < r; ++i) v.c[i] = C(j, i).truncated(d);
    for (int l = 0; l < n; ++l) {
      v.c[r + l] = D(j, l).truncated(d);
      v.c[r + n + l] = F(j, l).truncated(d);
    }
    v.c[r + n + j] += PowerSeries::constant(dim, d, 1.0);
    out.push_back(v);
  }
  return out;
}

bool Frame::reduced(double tol) const {
  for (const SeriesMatrix* m : {&A, &C, &E, &F})
    for (const auto& s : m->e)
      if (!s.is_zero(tol)) return false;
  return true;
}

namespace {

nlohmann::json matrix_json(const SeriesMatrix& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(series_json(m(i, j)));
    a.push_back(row);
  }
  return a;
}

SeriesMatrix matrix_from(const nlohmann::json& j, int rows, int cols, int dim, int dmax) {
  SeriesMatrix m(rows, cols, dim, dmax);
  if (static_cast<int>(j.size()) != rows) throw ShapeError("frame block has the wrong row count");
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw ShapeError("frame block has the wrong column count");
    for (int k = 0; k < cols; ++k) m(i, k) = series_from(j[i][k]);
  }
  return m;
}

}  // namespace

std::string to_json(const Frame& f) {
  nlohmann::ordered_json j;
  j["r"] = f.r;
  j["n"] = f.n;
  nlohmann::ordered_json b;
  b["A"] = matrix_json(f.A);
  b["B"] = matrix_json(f.B);
  b["C"] = matrix_json(f.C);
  b["D"] = matrix_json(f.D);
  b["E"] = matrix_json(f.E);
  b["F"] = matrix_json(f.F);
  j["blocks"] = b;
  return j.dump();
}

Frame frame_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const int r = j.at("r"), n = j.at("n");
  const auto& b = j.at("blocks");
  const int dim = r + 2 * n;
  Frame f;
  f.r = r;
  f.n = n;
  f.A = matrix_from(b.at("A"), r, r, dim, 0);
  f.B = matrix_from(b.at("B"), r, n, dim, 0);
  f.C = matrix_from(b.at("C"), n, r, dim, 0);
  f.D = matrix_from(b.at("D"), n, n, dim, 0);
  f.E = matrix_from(b.at("E"), r, n, dim, 0);
  f.F = matrix_from(b.at("F"), n, n, dim, 0);
  return f;
}

// ---------------------------------------------------------------- linear algebra

int numeric_rank(const Eigen::MatrixXcd& m, double rel) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int k = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > rel * s(0)) ++k;
  return k;
}

namespace {

// Row reduction with the largest available pivot in each column (first row
// on ties); pivots scaled to 1. Columns are visited in `order`.
template <class Mat>
std::vector<int> rref(Mat& m, const std::vector<int>& order, double tol) {
  std::vector<int> pivots;
  int row = 0;
  for (int c : order) {
    if (row >= m.rows()) break;
    int best = -1;
    double bv = tol;
    for (int i = row; i < m.rows(); ++i)
      if (std::abs(m(i, c)) > bv) {
        bv = std::abs(m(i, c));
        best = i;
      }
    if (best < 0) continue;
    m.row(row).swap(m.row(best));
    m.row(row) /= m(row, c);
    for (int i = 0; i < m.rows(); ++i)
      if (i != row && m(i, c) != 0.0) m.row(i) -= m(i, c) * m.row(row);
    pivots.push_back(c);
    ++row;
  }
  return pivots;
}

Eigen::MatrixXcd null_space(const Eigen::MatrixXcd& m, double rel) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double top = s.size() ? s(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > rel * top) ++rank;
  const int k = static_cast<int>(m.cols()) - rank;
  return svd.matrixV().rightCols(k);
}

// Matrix of field values at x in the real coordinate basis, one column per field.
Eigen::MatrixXcd values_real(const std::vector<VectorField>& fs, int r, int n, const std::vector<double>& x) {
  Eigen::MatrixXcd m(r + 2 * n, static_cast<int>(fs.size()));
  for (size_t k = 0; k < fs.size(); ++k) {
    std::vector<cplx> v = fs[k].eval(x);
    m.col(k) = to_real_basis(r, n, Eigen::Map<Eigen::VectorXcd>(v.data(), r + 2 * n));
  }
  return m;
}

}  // namespace

Eigen::MatrixXd real_basis(const Eigen::MatrixXcd& vectors, double rel) {
  const int N = static_cast<int>(vectors.rows()), m = static_cast<int>(vectors.cols());
  const int rk = numeric_rank(vectors, rel);
  Eigen::MatrixXcd both(N, 2 * m);
  both << vectors, vectors.conjugate();
  if (numeric_rank(both, rel) != rk) throw PreconditionError("span is not closed under conjugation");
  Eigen::MatrixXd cand(2 * m, N);
  cand.topRows(m) = vectors.real().transpose();
  cand.bottomRows(m) = vectors.imag().transpose();
  std::vector<int> order(N);
  for (int i = 0; i < N; ++i) order[i] = i;
  const double scale = cand.size() ? cand.cwiseAbs().maxCoeff() : 0.0;
  std::vector<int> piv = rref(cand, order, rel * scale);
  if (static_cast<int>(piv.size()) != rk) throw PreconditionError("real parts do not reproduce the span");
  Eigen::MatrixXd out = cand.topRows(rk).transpose();
  for (int i = 0; i < out.size(); ++i)
    if (std::abs(out.data()[i]) < 1e-15) out.data()[i] = 0.0;
  return out;
}

// ---------------------------------------------------------------- structure

StructureReport check_structure(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                                const std::vector<std::vector<double>>& probes, const StructureOptions& opt) {
  if (probes.empty()) throw PreconditionError("structure check needs at least one probe");
  const VectorField& ref = !X.empty() ? X[0] : L.at(0);
  const int r = ref.r, n = ref.n, N = r + 2 * n;
  std::vector<VectorField> all(L.begin(), L.end());
  all.insert(all.end(), X.begin(), X.end());
  for (const auto& v : all)
    if (v.r != r || v.n != n) throw ShapeError("fields of different shapes");
  std::vector<VectorField> Lb;
  for (const auto& v : L) Lb.push_back(v.conjugate());
  std::vector<VectorField> brackets;
  for (size_t a = 0; a < all.size(); ++a)
    for (size_t b = a + 1; b < all.size(); ++b) brackets.push_back(commutator(all[a], all[b]));

  StructureReport rep;
  rep.spans_tangent = rep.involutive = rep.intersection_is_X = rep.constant_rank = rep.dim_formula = rep.x_real = true;
  int first_rank = -1;
  for (const auto& p : probes) {
    ProbeReport pr;
    pr.point = p;
    Eigen::MatrixXcd UL = values_real(L, r, n, p), UX = values_real(X, r, n, p), ULb = UL.conjugate();
    Eigen::MatrixXcd U(N, UL.cols() + UX.cols()), Ub(N, UL.cols() + UX.cols()), full(N, 2 * UL.cols() + UX.cols());
    U << UL, UX;
    Ub << ULb, UX;
    full << UL, ULb, UX;
    pr.rank_full = numeric_rank(full, opt.rank_rel);
    pr.rank_LX = numeric_rank(U, opt.rank_rel);
    pr.rank_LbarX = numeric_rank(Ub, opt.rank_rel);
    pr.rank_X = numeric_rank(UX, opt.rank_rel);
    // intersection span{L,X} with its conjugate: U a = conj(U) b
    Eigen::MatrixXcd Uc = U.conjugate();
    Eigen::MatrixXcd stacked(N, 2 * U.cols());
    stacked << U, -Uc;
    Eigen::MatrixXcd K = null_space(stacked, opt.rank_rel);
    Eigen::MatrixXcd inter = U * K.topRows(U.cols());
    pr.intersection_dim = inter.cols() ? numeric_rank(inter, opt.rank_rel) : 0;
    Eigen::MatrixXcd sum(N, 2 * U.cols());
    sum << U, Uc;
    pr.dim_formula = numeric_rank(sum, opt.rank_rel) + pr.intersection_dim == 2 * pr.rank_LX;
    pr.x_imag_residual = UX.size() ? UX.imag().cwiseAbs().maxCoeff() : 0.0;
    // component of each bracket orthogonal to span{L, X}
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(U, Eigen::ComputeThinU);
    Eigen::MatrixXcd Q = svd.matrixU().leftCols(pr.rank_LX);
    for (const auto& br : brackets) {
      std::vector<cplx> v = br.eval(p);
      Eigen::VectorXcd w = to_real_basis(r, n, Eigen::Map<Eigen::VectorXcd>(v.data(), N));
      Eigen::VectorXcd res = w - Q * (Q.adjoint() * w);
      pr.commutator_residual = std::max(pr.commutator_residual, res.norm());
    }
    rep.spans_tangent &= pr.rank_full == N;
    rep.involutive &= pr.commutator_residual <= opt.commutator_tol;
    rep.intersection_is_X &= pr.intersection_dim == pr.rank_X;
    if (first_rank < 0) first_rank = pr.rank_LX;
    rep.constant_rank &= pr.rank_LX == first_rank;
    rep.dim_formula &= pr.dim_formula;
    rep.x_real &= pr.x_imag_residual <= 1e-12;
    rep.max_commutator_residual = std::max(rep.max_commutator_residual, pr.commutator_residual);
    rep.probes.push_back(pr);
  }
  rep.r = rep.probes[0].rank_X;
  rep.n = rep.probes[0].rank_LX - rep.r;
  return rep;
}

// ---------------------------------------------------------------- normalization

SeriesMap AffineChart::as_map(int dmax) const {
  const int d = static_cast<int>(shift.size());
  SeriesMap m;
  for (int i = 0; i < d; ++i) {
    PowerSeries c = PowerSeries::constant(d, dmax, shift(i));
    for (int j = 0; j < d; ++j)
      if (matrix(i, j) != 0.0) c += PowerSeries::variable(d, dmax, j, matrix(i, j));
    m.comps.push_back(c);
  }
  return m;
}

VectorField pullback_affine(const AffineChart& chart, const VectorField& z) {
  z.check();
  const int N = z.size();
  const int d = z.dmax();
  ComposeOptions co;
  co.recenter = chart.shift.cwiseAbs().maxCoeff() > 0.0;
  SeriesMap g = chart.as_map(d);
  std::vector<PowerSeries> xi = to_real_basis(z);
  std::vector<const PowerSeries*> ptr;
  for (const auto& s : xi) ptr.push_back(&s);
  std::vector<PowerSeries> moved = compose_many(ptr, g, co);
  Eigen::MatrixXcd Ainv = chart.matrix.inverse().cast<cplx>();
  SeriesMatrix col;
  col.rows = N;
  col.cols = 1;
  col.e = moved;
  return from_real_basis(z.r, z.n, (Ainv * col).e);
}

Normalization point_normalize(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                              const std::vector<double>& zeta0, double rel) {
  const int r = static_cast<int>(X.size()), n = static_cast<int>(L.size()), N = r + 2 * n, m = r + n;
  std::vector<VectorField> fields(X.begin(), X.end());
  fields.insert(fields.end(), L.begin(), L.end());
  for (const auto& v : fields)
    if (v.r != r || v.n != n) throw ShapeError("point_normalize needs r fields X and n fields L");
  if (static_cast<int>(zeta0.size()) != N) throw ShapeError("base point has the wrong dimension");

  Eigen::MatrixXcd U = values_real(fields, r, n, zeta0);
  {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(U);
    const auto& s = svd.singularValues();
    if (s(m - 1) <= rel * s(0)) throw SingularityError("fields are dependent at the base point", s(m - 1));
  }
  // real basis y of the intersection with the conjugate span
  Eigen::MatrixXcd stacked(N, 2 * m);
  stacked << U, -U.conjugate();
  Eigen::MatrixXcd K = null_space(stacked, rel);
  Eigen::MatrixXd Y(N, 0);
  if (K.cols() > 0) Y = real_basis(U * K.topRows(m), rel);
  if (Y.cols() != r) throw SingularityError("intersection dimension differs from the number of X fields", 0.0);
  std::vector<int> ypiv;
  for (int k = 0; k < r; ++k) {
    int p = 0;
    while (p < N && std::abs(Y(p, k) - 1.0) > 1e-14) ++p;
    ypiv.push_back(p);
  }

  // extend by field values chosen greedily by residual
  Eigen::MatrixXcd basis = Y.cast<cplx>();
  std::vector<Eigen::VectorXcd> ls;
  std::vector<bool> used(m, false);
  for (int j = 0; j < n; ++j) {
    int best = -1;
    double bv = -1;
    Eigen::MatrixXcd Q;
    if (basis.cols() > 0) Q = Eigen::HouseholderQR<Eigen::MatrixXcd>(basis).householderQ() *
                              Eigen::MatrixXcd::Identity(N, basis.cols());
    for (int k = 0; k < m; ++k) {
      if (used[k]) continue;
      Eigen::VectorXcd res = U.col(k);
      if (basis.cols() > 0) res -= Q * (Q.adjoint() * res);
      if (res.norm() > bv) {
        bv = res.norm();
        best = k;
      }
    }
    used[best] = true;
    ls.push_back(U.col(best));
    basis.conservativeResize(N, basis.cols() + 1);
    basis.col(basis.cols() - 1) = U.col(best);
  }
  // remove the y-pivot components, then echelon form on the dzbar/dz columns
  Eigen::MatrixXcd Lm(n, N);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXcd l = ls[j];
    for (int k = 0; k < r; ++k) l -= l(ypiv[k]) * Y.col(k).cast<cplx>();
    Lm.row(j) = from_real_basis(r, n, l).transpose();
  }
  std::vector<int> order;
  for (int j = 0; j < n; ++j) order.push_back(r + n + j);
  for (int j = 0; j < n; ++j) order.push_back(r + j);
  for (int k = 0; k < r; ++k) order.push_back(k);
  const double lscale = Lm.size() ? Lm.cwiseAbs().maxCoeff() : 0.0;
  if (static_cast<int>(rref(Lm, order, rel * lscale).size()) != n)
    throw SingularityError("could not complete the basis of the structure", 0.0);

  Eigen::MatrixXcd target(N, m);
  Eigen::MatrixXd A(N, N);
  for (int k = 0; k < r; ++k) {
    target.col(k) = Y.col(k).cast<cplx>();
    A.col(k) = Y.col(k);
  }
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXcd l = to_real_basis(r, n, Eigen::VectorXcd(Lm.row(j).transpose()));
    target.col(r + j) = l;
    A.col(r + j) = 2.0 * l.real();
    A.col(r + n + j) = 2.0 * l.imag();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> asvd(A);
  const double amin = asvd.singularValues()(N - 1);
  if (amin <= rel * asvd.singularValues()(0)) throw SingularityError("normalizing matrix is singular", amin);

  Normalization out;
  out.chart.shift = Eigen::Map<const Eigen::VectorXd>(zeta0.data(), N);
  out.chart.matrix = A;
  out.recombination = U.completeOrthogonalDecomposition().solve(target);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      if (std::abs(out.recombination(i, k)) < 1e-15) out.recombination(i, k) = 0.0;
  for (int k = 0; k < m; ++k) {
    VectorField v;
    bool first = true;
    for (int i = 0; i < m; ++i) {
      if (out.recombination(i, k) == cplx(0)) continue;
      VectorField t = out.recombination(i, k) * fields[i];
      v = first ? t : v + t;
      first = false;
    }
    VectorField pb = pullback_affine(out.chart, v);
    (k < r ? out.X : out.L).push_back(pb);
  }
  return out;
}

// ---------------------------------------------------------------- reduction

SeriesMatrix frame_M(const Frame& f) { return vstack(hstack(f.A, f.E), hstack(f.C, f.F)); }

std::vector<std::vector<double>> ball_probes(int dim, double radius, int count, uint64_t seed) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dim > 16) throw ShapeError("ball probes support up to 16 dimensions");
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> shift(dim);
  for (auto& s : shift) s = U(rng);
  std::vector<std::vector<double>> out;
  for (int64_t i = 1; static_cast<int>(out.size()) < count && i < 1000000; ++i) {
    std::vector<double> x(dim);
    double r2 = 0;
    for (int k = 0; k < dim; ++k) {
      double h = 0, f = 1.0 / primes[k];
      for (int64_t q = i; q > 0; q /= primes[k], f /= primes[k]) h += f * (q % primes[k]);
      x[k] = 2.0 * std::fmod(h + shift[k], 1.0) - 1.0;
      r2 += x[k] * x[k];
    }
    if (r2 > 1.0) continue;
    for (auto& c : x) c *= radius;
    out.push_back(x);
  }
  return out;
}

Reduction reduce_to_EF(const Frame& f, const ReduceOptions& opt) {
  const int r = f.r, n = f.n, dim = f.dim(), d = f.dmax();
  SeriesMatrix M = frame_M(f).truncated(d);
  SeriesMatrix BD = vstack(f.B, f.D).truncated(d);
  auto big = [](const Eigen::MatrixXcd& a) { return a.size() > 0 && a.cwiseAbs().maxCoeff() > 1e-12; };
  if (big(M.at_zero()) || big(BD.at_zero()))
    throw PreconditionError("frame blocks must vanish at 0 before reduction");
  SeriesMatrix IM = SeriesMatrix::identity(r + n, dim, d) + M;

  Reduction red;
  double radius = 1.0;
  red.eta0 = 0.0;
  for (int h = 0; h <= opt.max_halvings; ++h, radius *= 0.5) {
    auto probes = ball_probes(dim, radius, opt.probes, opt.seed);
    probes.push_back(std::vector<double>(dim, 0.0));
    double dmin = 1e300;
    for (const auto& p : probes) {
      std::vector<cplx> z(p.begin(), p.end());
      dmin = std::min(dmin, std::abs(IM.eval(z).determinant()));
    }
    if (dmin >= opt.det_threshold) {
      red.eta0 = radius;
      red.det_min = dmin;
      break;
    }
  }
  if (red.eta0 == 0.0) throw DomainShrinkError("I+M is not safely invertible on any dyadic ball", 0.0);
  if (opt.require_radius > 0 && red.eta0 < opt.require_radius)
    throw DomainShrinkError("I+M is not safely invertible on the requested ball", red.eta0);

  red.multiplier = inverse(IM);
  SeriesMatrix EF = red.multiplier * BD;
  red.frame.r = r;
  red.frame.n = n;
  red.frame.E = EF.block(0, 0, r, n);
  red.frame.F = EF.block(r, 0, n, n);
  for (auto& s : red.frame.E.e) s.prune();
  for (auto& s : red.frame.F.e) s.prune();
  return red;
}

std::vector<VectorField> ReducedFrame::X() const { return to_frame().X(); }
std::vector<VectorField> ReducedFrame::L() const { return to_frame().L(); }

int ReducedFrame::dmax() const {
  int d = 1 << 20;
  if (!E.e.empty()) d = std::min(d, E.dmax());
  if (!F.e.empty()) d = std::min(d, F.dmax());
  return d;
}

Frame ReducedFrame::to_frame() const {
  Frame f = Frame::zero(r, n, dmax());
  f.B = E;
  f.D = F;
  return f;
}

ReducedFrame scale_frame(const ReducedFrame& f, double gamma, double eta0) {
  if (!(gamma > 0) || gamma > std::min(eta0 / 2, 1.0) * (1 + 1e-12))
    throw PreconditionError("scaling needs 0 < gamma <= min(eta0/2, 1)");
  for (const SeriesMatrix* m : {&f.E, &f.F})
    for (const auto& s : m->e)
      if (std::abs(s.at_zero()) > 1e-12) throw PreconditionError("scaling needs E(0) = 0 and F(0) = 0");
  ReducedFrame g = f;
  for (SeriesMatrix* m : {&g.E, &g.F})
    for (auto& s : m->e) {
      const Layout& L = s.layout();
      for (int i = 0; i < s.size(); ++i) s.coeff_ref(i) *= std::pow(gamma, L.degree(i));
      s.prune();
    }
  return g;
}

}  // namespace frobflat
