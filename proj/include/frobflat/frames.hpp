#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frobflat/series.hpp"

namespace frobflat {

// Dense matrix of power series sharing one dimension. Caps may differ
// between operations; products and sums work at the smaller cap.
struct SeriesMatrix {
  int rows = 0, cols = 0;
  std::vector<PowerSeries> e;

  SeriesMatrix() = default;
  SeriesMatrix(int rows, int cols, int dim, int dmax);
  static SeriesMatrix identity(int n, int dim, int dmax);
  static SeriesMatrix constant(const Eigen::MatrixXcd& m, int dim, int dmax);

  PowerSeries& operator()(int i, int j) { return e[static_cast<size_t>(i) * cols + j]; }
  const PowerSeries& operator()(int i, int j) const { return e[static_cast<size_t>(i) * cols + j]; }
  int dim() const { return e.empty() ? 0 : e[0].dim(); }
  int dmax() const;
  Eigen::MatrixXcd at_zero() const;
  Eigen::MatrixXcd eval(const std::vector<cplx>& x) const;
  SeriesMatrix truncated(int d) const;
  SeriesMatrix block(int r0, int c0, int nr, int nc) const;
  double max_abs() const;
  // sum over alpha of (largest row sum of |a_alpha|) radius^|alpha|
  double anorm(double radius) const;
};

SeriesMatrix operator+(const SeriesMatrix& a, const SeriesMatrix& b);
SeriesMatrix operator-(const SeriesMatrix& a, const SeriesMatrix& b);
SeriesMatrix operator*(const SeriesMatrix& a, const SeriesMatrix& b);
SeriesMatrix operator*(const Eigen::MatrixXcd& a, const SeriesMatrix& b);
SeriesMatrix operator*(const SeriesMatrix& a, const Eigen::MatrixXcd& b);
SeriesMatrix hstack(const SeriesMatrix& a, const SeriesMatrix& b);
SeriesMatrix vstack(const SeriesMatrix& a, const SeriesMatrix& b);
SeriesMatrix transpose(const SeriesMatrix& a);
SeriesMatrix conj_coeffs(const SeriesMatrix& a);
SeriesMatrix compose(const SeriesMatrix& a, const SeriesMap& g, ComposeOptions opt = {});
// Inverse through the cap. The constant term must be invertible.
SeriesMatrix inverse(const SeriesMatrix& s, double sigma_min = 1e-10);

// Row j of the Jacobian holds the partials of component j.
SeriesMatrix jacobian(const SeriesMap& f);

// Complex vector field on B in R^r x C^n with coefficients on the basis
// (d/dt_1..d/dt_r, d/dz_1..d/dz_n, d/dzbar_1..d/dzbar_n). Coefficients are
// series in the real variables (t, x_1..x_2n), z_j = x_j + i x_{j+n}.
struct VectorField {
  int r = 0, n = 0;
  std::vector<PowerSeries> c;

  VectorField() = default;
  VectorField(int r, int n, int dmax);
  static VectorField basis(int r, int n, int dmax, int slot, cplx scale = 1.0);
  int size() const { return r + 2 * n; }
  int dmax() const;
  std::vector<cplx> eval(const std::vector<double>& x) const;
  std::vector<cplx> at_zero() const;
  VectorField truncated(int d) const;
  VectorField conjugate() const;
  void check() const;
};

VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator-(const VectorField& a, const VectorField& b);
VectorField operator*(cplx s, const VectorField& a);
VectorField multiply(const PowerSeries& f, const VectorField& v);
double max_diff(const VectorField& a, const VectorField& b);

// Basis changes between (dt, dz, dzbar) and the real coordinate basis.
std::vector<PowerSeries> to_real_basis(const VectorField& v);
VectorField from_real_basis(int r, int n, const std::vector<PowerSeries>& xi);
Eigen::VectorXcd to_real_basis(int r, int n, const Eigen::VectorXcd& v);
Eigen::VectorXcd from_real_basis(int r, int n, const Eigen::VectorXcd& xi);

// V f with cap reduced by one.
PowerSeries apply(const VectorField& v, const PowerSeries& f);
VectorField commutator(const VectorField& v, const VectorField& w);

// (Phi^* Z)(y) = dPhi(y)^{-1} Z(Phi(y)), Phi in real coordinates with Phi(0)=0.
VectorField pullback(const SeriesMap& phi, const VectorField& z);
VectorField pushforward(const SeriesMap& phi, const VectorField& z);

// X_k = dt_k + A dt + B dz + E dzbar, L_j = dzbar_j + C dt + D dz + F dzbar.
struct Frame {
  int r = 0, n = 0;
  SeriesMatrix A, B, C, D, E, F;

  static Frame zero(int r, int n, int dmax);
  static Frame from_fields(const std::vector<VectorField>& X, const std::vector<VectorField>& L);
  std::vector<VectorField> X() const;
  std::vector<VectorField> L() const;
  int dmax() const;
  int dim() const { return r + 2 * n; }
  // True for the shape X = dt + B dz, L = dzbar + D dz.
  bool reduced(double tol = 0.0) const;
};

std::string to_json(const Frame& f);
Frame frame_from_json(const std::string& text);

// ---------------------------------------------------------------- structure

struct ProbeReport {
  std::vector<double> point;
  int rank_full = 0;      // span {L, Lbar, X}
  int rank_LX = 0;        // dim of the structure
  int rank_LbarX = 0;
  int rank_X = 0;
  int intersection_dim = 0;
  bool dim_formula = false;
  double commutator_residual = 0.0;
  double x_imag_residual = 0.0;
};

struct StructureReport {
  std::vector<ProbeReport> probes;
  bool spans_tangent = false;     // L, Lbar, X span the complexified tangent space
  bool involutive = false;        // brackets stay in span {L, X}
  bool intersection_is_X = false; // span{L,X} meets span{Lbar,X} in span{X}
  bool constant_rank = false;
  bool dim_formula = false;
  bool x_real = false;
  double max_commutator_residual = 0.0;
  int r = 0, n = 0;  // recovered dimensions
  bool ok() const {
    return spans_tangent && involutive && intersection_is_X && constant_rank && dim_formula && x_real;
  }
};

struct StructureOptions {
  double rank_rel = 1e-8;
  double commutator_tol = 1e-8;
};

StructureReport check_structure(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                                const std::vector<std::vector<double>>& probes,
                                const StructureOptions& opt = {});

int numeric_rank(const Eigen::MatrixXcd& m, double rel = 1e-8);

// Real basis of a conjugation-closed span, in reduced row echelon form
// (one vector per column of the result).
Eigen::MatrixXd real_basis(const Eigen::MatrixXcd& vectors, double rel = 1e-8);

struct AffineChart {
  Eigen::VectorXd shift;   // zeta_0
  Eigen::MatrixXd matrix;  // A: chart(xi) = shift + A xi
  SeriesMap as_map(int dmax) const;
};

struct Normalization {
  AffineChart chart;
  Eigen::MatrixXcd recombination;  // new field k = sum_i old field i * M(i,k), X first then L
  std::vector<VectorField> X, L;   // pulled back, model-valued at 0
};

Normalization point_normalize(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                              const std::vector<double>& zeta0, double rel = 1e-8);

// Pulls fields back by an affine chart with possibly non-zero shift.
VectorField pullback_affine(const AffineChart& chart, const VectorField& z);

// ---------------------------------------------------------------- reduction

struct ReduceOptions {
  double det_threshold = 0.5;
  int probes = 64;
  int max_halvings = 20;
  double require_radius = 0.0;  // > 0: fail unless this radius is admissible
  uint64_t seed = 0;
};

// X_k = dt_k + E dz, L_j = dzbar_j + F dz.
struct ReducedFrame {
  int r = 0, n = 0;
  SeriesMatrix E, F;

  std::vector<VectorField> X() const;
  std::vector<VectorField> L() const;
  Frame to_frame() const;
  int dmax() const;
};

struct Reduction {
  ReducedFrame frame;
  SeriesMatrix multiplier;   // (I + M)^{-1}
  double eta0 = 0.0;
  double det_min = 0.0;
};

SeriesMatrix frame_M(const Frame& f);
Reduction reduce_to_EF(const Frame& f, const ReduceOptions& opt = {});

// E_gamma(t, z) = E(gamma t, gamma z), F likewise. Requires 0 < gamma <= min(eta0/2, 1).
ReducedFrame scale_frame(const ReducedFrame& f, double gamma, double eta0);

// Seeded points of the closed ball of radius `radius` in R^d.
std::vector<std::vector<double>> ball_probes(int dim, double radius, int count, uint64_t seed);

}  // namespace frobflat
