#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "frobflat/series.hpp"

namespace frobflat {

enum class Space { Zygmund, Holder, Ck, A, B };
enum class Method { SeriesExact, GridSample };

struct NormEstimate {
  double value = 0.0;
  Space space = Space::A;
  std::vector<double> params;  // Zygmund {s}, Holder {m, a}, Ck {m}, A/B {dim, radius}
  Method method = Method::SeriesExact;
  double resolution = 0.0;     // grid spacing or degree cap
  bool lower_bound = false;

  std::string space_name() const;
  std::string method_name() const;
};

std::string to_json(const NormEstimate& e);

// Samples on the lattice of the cube [-R,R]^d with `n` points per axis.
// Only points of the closed ball enter the norms; the rest feed the
// finite-difference stencils.
class GridField {
public:
  GridField() = default;
  GridField(int dim, int n, double radius, int ncomp);

  using Fn = std::function<void(const double* x, cplx* out)>;
  static GridField sample(int dim, int n, double radius, int ncomp, const Fn& f);
  static GridField from_series(const PowerSeries& f, double radius, int n);
  static GridField from_map(const SeriesMap& f, double radius, int n);

  int dim() const { return dim_; }
  int n() const { return n_; }
  int ncomp() const { return ncomp_; }
  double radius() const { return radius_; }
  double spacing() const { return 2.0 * radius_ / (n_ - 1); }
  int npoints() const { return static_cast<int>(pts_); }
  double coord(int i) const { return -radius_ + i * spacing(); }
  void point(int64_t p, double* x) const;
  bool in_ball(int64_t p) const { return mask_[p]; }

  cplx& at(int64_t p, int c) { return v_[p * ncomp_ + c]; }
  cplx at(int64_t p, int c) const { return v_[p * ncomp_ + c]; }
  const std::vector<cplx>& values() const { return v_; }

  GridField component(int c) const;
  GridField operator+(const GridField& o) const;
  // Fourth-order finite difference along `axis`, one-sided near faces.
  GridField derivative(int axis) const;

private:
  int dim_ = 0, n_ = 0, ncomp_ = 0;
  double radius_ = 0.0;
  int64_t pts_ = 0;
  std::vector<cplx> v_;
  std::vector<char> mask_;
  void build_mask();
};

struct ProbeConfig {
  int n_random_dirs = 8;
  uint64_t seed = 0;
  // Hoelder seminorms use every lattice pair when the count fits.
  int64_t pair_budget = 20000000;
};

// Exact analytic norm sum |a_alpha| radius^|alpha|.
NormEstimate anorm(const PowerSeries& f, double radius);
// Componentwise maximum.
NormEstimate anorm(const SeriesMap& f, double radius);

// Grid estimators. For several components the maximum is reported.
NormEstimate zygmund_estimate(const GridField& f, double s, const ProbeConfig& cfg = {});
NormEstimate holder_estimate(const GridField& f, int m, double a, const ProbeConfig& cfg = {});
NormEstimate ck_estimate(const GridField& f, int m);

// f(gamma t). Requires 0 < gamma <= eta1 / D.
PowerSeries scale_series(const PowerSeries& f, double gamma, double D, double eta1);

struct BnormConfig {
  int samples = 4096;
  int circle_points = 64;
  uint64_t seed = 0;
};
// Sup of |f| over a sampled sphere of radius `radius` in C^d.
NormEstimate bnorm_estimate(const PowerSeries& f, double radius, const BnormConfig& cfg = {});

// Lattice displacements used by the estimators (exposed for tests and diagnostics).
std::vector<std::vector<int>> second_difference_probes(int dim, int n, const ProbeConfig& cfg);
std::vector<std::vector<int>> holder_probes(int dim, int n, const ProbeConfig& cfg);

// Seminorm pieces for a scalar grid field (component 0).
double grid_sup(const GridField& f);
double holder_seminorm(const GridField& f, double a, const ProbeConfig& cfg = {});
double second_difference_seminorm(const GridField& f, double s, const ProbeConfig& cfg = {});

}  // namespace frobflat
