#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "frobflat/errors.hpp"

namespace frobflat {

using cplx = std::complex<double>;
using MultiIndex = std::vector<int>;

inline constexpr double kPruneThreshold = 1e-14;
inline constexpr int kDefaultDmax = 8;

// Dense monomial table for a fixed (dimension, degree cap). Monomials are
// stored in graded-lex order: by total degree, then lexicographically with
// larger leading exponents first. Truncation to a lower cap is a prefix.
class Layout {
public:
  static std::shared_ptr<const Layout> get(int dim, int dmax);

  int dim() const { return dim_; }
  int dmax() const { return dmax_; }
  int size() const { return static_cast<int>(degree_.size()); }
  int degree(int i) const { return degree_[i]; }
  const int* exponents(int i) const { return &exps_[static_cast<size_t>(i) * dim_]; }
  // Number of monomials of degree <= k (k clipped to [-1, dmax]).
  int prefix(int k) const;
  // -1 when the index is absent (degree above cap).
  int index_of(const int* alpha) const;
  // Index of alpha - e_v, -1 if alpha_v == 0.
  int lower(int v, int i) const { return lower_[static_cast<size_t>(v) * size() + i]; }
  // Index of alpha + e_v, -1 if degree would exceed the cap.
  int raise(int v, int i) const { return raise_[static_cast<size_t>(v) * size() + i]; }
  // For evaluation: monomial i = monomial parent(i) * x[pvar(i)].
  int parent(int i) const { return parent_[i]; }
  int pvar(int i) const { return pvar_[i]; }
  // Index of alpha_i + alpha_j; valid for j < prefix(dmax - degree(i)).
  int sum_index(int i, int j) const { return sum_[sum_off_[i] + j]; }

private:
  Layout(int dim, int dmax);
  int dim_, dmax_;
  std::vector<int> exps_, degree_, dstart_, lower_, raise_, parent_, pvar_;
  std::vector<int> sum_;
  std::vector<size_t> sum_off_;
  std::vector<std::pair<uint64_t, int>> lookup_;  // sorted keys
  uint64_t key(const int* alpha) const;
};

class PowerSeries {
public:
  PowerSeries() = default;
  PowerSeries(int dim, int dmax);

  static PowerSeries constant(int dim, int dmax, cplx c);
  static PowerSeries variable(int dim, int dmax, int var, cplx scale = 1.0);
  static PowerSeries monomial(int dim, int dmax, const MultiIndex& alpha, cplx c);

  int dim() const { return layout_ ? layout_->dim() : 0; }
  int dmax() const { return layout_ ? layout_->dmax() : -1; }
  int size() const { return static_cast<int>(c_.size()); }
  const Layout& layout() const { return *layout_; }
  bool valid() const { return static_cast<bool>(layout_); }

  cplx coeff(int i) const { return c_[i]; }
  cplx& coeff_ref(int i) { return c_[i]; }
  cplx coeff(const MultiIndex& alpha) const;
  void set(const MultiIndex& alpha, cplx v);
  const std::vector<cplx>& coeffs() const { return c_; }
  std::vector<cplx>& coeffs() { return c_; }

  cplx at_zero() const { return c_.empty() ? cplx(0) : c_[0]; }
  cplx eval(const cplx* x) const;
  cplx eval(const std::vector<cplx>& x) const { return eval(x.data()); }
  double eval_real(const std::vector<double>& x) const;

  PowerSeries truncated(int new_dmax) const;
  // Same coefficients at a higher cap; upper degrees are zero. Only correct
  // when the series is known to be a polynomial within the old cap.
  PowerSeries padded(int new_dmax) const;
  PowerSeries conj_coeffs() const;
  PowerSeries real_part() const;
  PowerSeries imag_part() const;
  PowerSeries homogeneous_part(int k) const;
  int max_degree() const;  // highest degree with a nonzero coefficient, -1 for zero
  bool is_zero(double tol = 0.0) const;
  double max_abs() const;

  void prune(double thr = kPruneThreshold);

  PowerSeries& operator+=(const PowerSeries& o);
  PowerSeries& operator-=(const PowerSeries& o);
  PowerSeries& operator*=(cplx s);

private:
  std::shared_ptr<const Layout> layout_;
  std::vector<cplx> c_;
};

PowerSeries operator+(PowerSeries a, const PowerSeries& b);
PowerSeries operator-(PowerSeries a, const PowerSeries& b);
PowerSeries operator-(PowerSeries a);
PowerSeries operator*(PowerSeries a, cplx s);
PowerSeries operator*(cplx s, PowerSeries a);
PowerSeries operator*(const PowerSeries& a, const PowerSeries& b);

// Truncated Cauchy product. Caps and dimensions must match.
PowerSeries mul(const PowerSeries& f, const PowerSeries& g);
// Product with the magnitude of the largest coefficient dropped by truncation.
PowerSeries mul(const PowerSeries& f, const PowerSeries& g, double* dropped);
// Brings both operands to the smaller cap first.
PowerSeries mul_lowest(const PowerSeries& f, const PowerSeries& g);
PowerSeries add_lowest(const PowerSeries& f, const PowerSeries& g);

struct SeriesMap {
  std::vector<PowerSeries> comps;

  SeriesMap() = default;
  explicit SeriesMap(std::vector<PowerSeries> c);
  static SeriesMap identity(int dim, int dmax);
  static SeriesMap zero(int d_in, int d_out, int dmax);

  int d_in() const { return comps.empty() ? 0 : comps[0].dim(); }
  int d_out() const { return static_cast<int>(comps.size()); }
  int dmax() const;
  const PowerSeries& operator[](int i) const { return comps[i]; }
  PowerSeries& operator[](int i) { return comps[i]; }
  std::vector<cplx> eval(const std::vector<cplx>& x) const;
  std::vector<double> eval_real(const std::vector<double>& x) const;
  SeriesMap truncated(int new_dmax) const;
  void check() const;
};

struct ComposeOptions {
  bool recenter = false;  // allow g(0) != 0: composes the truncated polynomial f
};

// f o g. The result cap is min(cap f, cap g) when g(0)=0.
PowerSeries compose(const PowerSeries& f, const SeriesMap& g, ComposeOptions opt = {});
SeriesMap compose(const SeriesMap& f, const SeriesMap& g, ComposeOptions opt = {});
// Composes several series with the same inner map sharing the monomial table.
std::vector<PowerSeries> compose_many(const std::vector<const PowerSeries*>& fs,
                                      const SeriesMap& g, ComposeOptions opt = {});

struct InvertOptions {
  double sigma_min = 1e-10;
};
// K with compose(K, H) = id through the cap.
SeriesMap invert_map(const SeriesMap& H, InvertOptions opt = {});

PowerSeries differentiate(const PowerSeries& f, int var);

enum class Wirt { dz, dzbar };
// z_j = x_{r+j} + i x_{r+j+n}; result is 1/2 (d/dx -+ i d/dx').
PowerSeries wirtinger(const PowerSeries& f, int r, int n, int j, Wirt kind);

// Multiplies by the monomial var^power, lifting the cap by `power`.
PowerSeries shift_up(const PowerSeries& f, int var, int power, int new_dmax);

// Linear part of a map at 0 as a row-major d_out x d_in matrix.
std::vector<cplx> linear_part(const SeriesMap& H);

// Coefficients of the top `levels` degrees: magnitude of the largest.
double top_degree_max(const PowerSeries& f, int levels = 1);

// JSON round trip.
std::string to_json(const PowerSeries& f);
PowerSeries series_from_json(const std::string& text);

}  // namespace frobflat
