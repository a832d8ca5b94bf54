#pragma once

#include <vector>

#include "frobflat/frames.hpp"
#include "frobflat/series.hpp"

namespace frobflat {

// Holomorphic vector field sum_i c_i d/dzeta_i on a ball in C^N.
struct HoloField {
  std::vector<PowerSeries> c;

  HoloField() = default;
  explicit HoloField(std::vector<PowerSeries> comps) : c(std::move(comps)) {}
  static HoloField basis(int N, int dmax, int slot, cplx scale = 1.0);
  int dim() const { return static_cast<int>(c.size()); }
  int dmax() const;
  HoloField truncated(int d) const;
};

HoloField operator+(const HoloField& a, const HoloField& b);
HoloField operator*(cplx s, const HoloField& a);
// V f, cap reduced by one.
PowerSeries apply(const HoloField& v, const PowerSeries& f);
HoloField commutator(const HoloField& a, const HoloField& b);
double max_diff(const HoloField& a, const HoloField& b);

// Same coefficient table, read as a function of complex variables.
PowerSeries complexify(const PowerSeries& f);
// Extension of a real-variable field: dt_k -> d/dsigma_k and
// dz_j, dzbar_j -> (1/2)(d/dzeta_j -+ i d/dzeta_{j+n}).
HoloField complexify(const VectorField& v);

// Z_j = (1/2)(d/dzeta_j - i d/dzeta_{j+n}).
HoloField z_field(int r, int n, int dmax, int j);

// e^{sV} q as a map of (s, q_1..q_N); exact through total degree dmax.
SeriesMap flow_series(const HoloField& v, int dmax);

// sum_m tau^m/m! (V^m id) o q, with tau the parameter variable `param`
// of the (parameter) domain of q. Exact through the cap of q.
SeriesMap flow_apply(const HoloField& v, const SeriesMap& q, int param);

struct FlowResult {
  std::vector<cplx> point;
  double top_term = 0.0;  // size of the degree-cap time term at the endpoint
  SeriesMap map;          // time series of the flow started at p0
};

struct FlowOptions {
  double trust_tol = 1e-10;
};

// e^{tV} p0. Fails with StepError when the last retained time term is not
// negligible relative to the result.
FlowResult exp_flow(const HoloField& v, cplx t, const std::vector<cplx>& p0, const FlowOptions& opt = {});

// Psi(t, u, v) = e^{t1 X1} ... e^{tr Xr} e^{u1 L1} ... e^{un Ln} e^{v1 Z1} ... e^{vn Zn} 0.
SeriesMap build_psi(const std::vector<HoloField>& X, const std::vector<HoloField>& L, int r, int n);

struct FirstIntegrals {
  std::vector<PowerSeries> w;
  SeriesMap psi_inverse;
  double eta1 = 0.0;
};

// w_j = v_j o Psi^{-1}; eta1 is the largest dyadic radius <= 1 where the
// top two retained degrees of every w_j stay below 1e-10 of its norm.
FirstIntegrals first_integrals(const SeriesMap& psi, int r, int n);

}  // namespace frobflat
