#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frobflat/series.hpp"

namespace frobflat {

// Samples on the periodic box [-L, L)^d, n points per axis, axis 0 slowest.
// Values are stored component-major: data[c * npoints + p].
struct PeriodicGrid {
  int dim = 0, n = 0, ncomp = 0;
  double half_width = 1.0;
  std::vector<cplx> data;

  PeriodicGrid() = default;
  PeriodicGrid(int dim, int n, double half_width, int ncomp);

  using Fn = std::function<void(const double* x, cplx* out)>;
  static PeriodicGrid sample(int dim, int n, double half_width, int ncomp, const Fn& f);

  int64_t npoints() const;
  double spacing() const { return 2.0 * half_width / n; }
  void point(int64_t p, double* x) const;
  cplx& at(int c, int64_t p) { return data[c * npoints() + p]; }
  cplx at(int c, int64_t p) const { return data[c * npoints() + p]; }
  cplx* comp(int c) { return data.data() + c * npoints(); }
  const cplx* comp(int c) const { return data.data() + c * npoints(); }

  bool same_shape(const PeriodicGrid& o) const;
  double sup() const;
  double sup_in_ball(double radius) const;
  PeriodicGrid& operator+=(const PeriodicGrid& o);
  PeriodicGrid& operator-=(const PeriodicGrid& o);
  PeriodicGrid& operator*=(cplx s);
};

PeriodicGrid operator+(PeriodicGrid a, const PeriodicGrid& b);
PeriodicGrid operator-(PeriodicGrid a, const PeriodicGrid& b);
PeriodicGrid operator*(cplx s, PeriodicGrid a);
// Sum over points and components of conj(a) b, times the cell volume.
cplx inner(const PeriodicGrid& a, const PeriodicGrid& b);

// Binary file: little-endian int64 dim, n, ncomp, double half_width, then
// point-major complex doubles (re, im).
void write_grid(const std::string& path, const PeriodicGrid& g);
PeriodicGrid read_grid(const std::string& path);

// Angular wavenumbers of lattice point p (FFT ordering, Nyquist negative).
std::vector<double> wavenumbers(const PeriodicGrid& g, int64_t p);
// Spectral derivative of every component along `axis`.
PeriodicGrid spectral_derivative(const PeriodicGrid& g, int axis);

// Smooth cutoff: 1 on |x| <= inner, exp(1 - 1/(1 - s^2)) with
// s = (|x| - inner)/(outer - inner) in between, 0 beyond outer.
double plateau_bump(double radius, double inner, double outer);
// Ball data embedded in the box: multiplies by the cutoff with
// inner = ball_radius/2 and outer = 0.95 * half_width.
PeriodicGrid embed_ball(const PeriodicGrid& g, double ball_radius);

// The operator (A, B) -> (curl_t A, mixed rows, curl_zbar B, divergence).
// Inputs have r + n components (A first); real variables are
// (t_1..t_r, x_1..x_n, y_1..y_n) with z_j = x_j + i y_j.
struct EllipticOperator {
  int r = 0, n = 0;

  EllipticOperator() = default;
  EllipticOperator(int r, int n);
  int dim() const { return r + 2 * n; }
  int in_comps() const { return r + n; }
  int out_comps() const;
  std::vector<std::string> row_names() const;
  // Symbol matrix for the frequency kappa (derivative d/dx_a -> i kappa_a).
  Eigen::MatrixXcd symbol(const std::vector<double>& kappa) const;
  // |kappa_t|^2 + (1/4)|kappa_x|^2
  double square_symbol(const std::vector<double>& kappa) const;
};

// Series version with Wirtinger derivatives; caps drop by one.
std::vector<PowerSeries> apply_E(const EllipticOperator& op, const std::vector<PowerSeries>& AB);
PeriodicGrid apply_E(const EllipticOperator& op, const PeriodicGrid& AB);
PeriodicGrid apply_E_adjoint(const EllipticOperator& op, const PeriodicGrid& v);
// Mean-zero Fourier inverse of E*E; the zero mode goes to zero.
PeriodicGrid solve_P(const EllipticOperator& op, const PeriodicGrid& rhs);

struct SymbolCertificate {
  double min_singular = 0.0;      // over every nonzero lattice frequency
  double max_square_defect = 0.0; // |S*S - square_symbol I|
  int64_t frequencies = 0;
};
SymbolCertificate certify_symbol(const EllipticOperator& op, int n, double half_width);

// Gamma(u, grad w)_o = sum_{a,b,c} G[o][a][b][c] u_a d_b w_c.
struct Bilinear {
  int m_out = 0, m_in = 0, dim = 0;
  std::vector<cplx> G;

  static Bilinear zero(int m_out, int m_in, int dim);
  static Bilinear random(int m_out, int m_in, int dim, double scale, uint64_t seed);
  cplx& at(int o, int a, int b, int c) { return G[((static_cast<size_t>(o) * m_in + a) * dim + b) * m_in + c]; }
  cplx at(int o, int a, int b, int c) const { return G[((static_cast<size_t>(o) * m_in + a) * dim + b) * m_in + c]; }
  // grad holds d_b w_c as component b * m_in + c.
  PeriodicGrid eval(const PeriodicGrid& u, const PeriodicGrid& grad) const;
  // Gamma(u, grad w) with the gradient taken spectrally.
  PeriodicGrid eval_fields(const PeriodicGrid& u, const PeriodicGrid& w) const;
};

// All derivatives d_b u_c laid out as component b * ncomp + c.
PeriodicGrid gradient(const PeriodicGrid& u);

struct EllipticProblem {
  EllipticOperator op;
  Bilinear gamma;
  PeriodicGrid H;
  double tol = 1e-10;
  int max_iter = 60;
  int plain_iters = 5;
  double ratio_limit = 0.5;
};

struct ContractionResult {
  PeriodicGrid V;
  std::vector<double> steps;   // ||T(V_k) - V_k|| per iteration
  std::vector<double> ratios;  // steps[k] / steps[k-1]
  int iterations = 0;
  bool newton_used = false;
  double residual = 0.0;
};

// T(V) = P E* Gamma(H + V, grad(H + V))
PeriodicGrid contraction_map(const EllipticProblem& pb, const PeriodicGrid& V);

// Fixed point of T. Plain iteration first; once the plain ratios are at or
// below ratio_limit, Newton-GMRES steps finish the solve. Raises
// DivergenceError (carrying the ratios) when the plain ratio stays above the
// limit or the iteration cap is hit.
ContractionResult contraction_solve(const EllipticProblem& pb, std::optional<PeriodicGrid> start = {});

// Largest scale s (bisection over [lo, hi]) for which contraction_solve
// succeeds on H = s * H0.
double calibrate_threshold(EllipticProblem pb, const PeriodicGrid& H0, double lo, double hi, int steps = 24);

std::string trace_json(const ContractionResult& r);

}  // namespace frobflat
