#include "frobflat/flows.hpp"

#include <algorithm>
#include <cmath>

namespace frobflat {

HoloField HoloField::basis(int N, int dmax, int slot, cplx scale) {
  HoloField v;
  for (int i = 0; i < N; ++i) v.c.push_back(PowerSeries::constant(N, dmax, i == slot ? scale : cplx(0)));
  return v;
}

int HoloField::dmax() const {
  int d = c.empty() ? -1 : c[0].dmax();
  for (const auto& s : c) d = std::min(d, s.dmax());
  return d;
}

HoloField HoloField::truncated(int d) const {
  HoloField v;
  for (const auto& s : c) v.c.push_back(s.truncated(d));
  return v;
}

HoloField operator+(const HoloField& a, const HoloField& b) {
  if (a.dim() != b.dim()) throw ShapeError("adding holomorphic fields of different dimension");
  HoloField v;
  for (int i = 0; i < a.dim(); ++i) v.c.push_back(add_lowest(a.c[i], b.c[i]));
  return v;
}

HoloField operator*(cplx s, const HoloField& a) {
  HoloField v = a;
  for (auto& c : v.c) c *= s;
  return v;
}

PowerSeries apply(const HoloField& v, const PowerSeries& f) {
  if (f.dim() != v.dim()) throw ShapeError("function and field live in different dimensions");
  const int d = std::min(v.dmax(), f.dmax()) - 1;
  if (d < 0) throw ShapeError("applying a field needs degree cap >= 1");
  PowerSeries out(f.dim(), d);
  for (int i = 0; i < v.dim(); ++i)
    if (!v.c[i].is_zero()) out += mul(v.c[i].truncated(d), differentiate(f, i).truncated(d));
  return out;
}

HoloField commutator(const HoloField& a, const HoloField& b) {
  if (a.dim() != b.dim()) throw ShapeError("commutator of fields of different dimension");
  HoloField v;
  for (int i = 0; i < a.dim(); ++i) v.c.push_back(apply(a, b.c[i]) - apply(b, a.c[i]));
  return v;
}

double max_diff(const HoloField& a, const HoloField& b) {
  if (a.dim() != b.dim()) throw ShapeError("comparing fields of different dimension");
  double m = 0;
  for (int i = 0; i < a.dim(); ++i) {
    PowerSeries d = add_lowest(a.c[i], -b.c[i]);
    m = std::max(m, d.max_abs());
  }
  return m;
}

PowerSeries complexify(const PowerSeries& f) { return f; }

HoloField complexify(const VectorField& v) { return HoloField(to_real_basis(v)); }

HoloField z_field(int r, int n, int dmax, int j) {
  const int N = r + 2 * n;
  HoloField v = HoloField::basis(N, dmax, r + j, 0.5);
  v.c[r + n + j] = PowerSeries::constant(N, dmax, cplx(0, -0.5));
  return v;
}

SeriesMap flow_apply(const HoloField& v, const SeriesMap& q, int param) {
  q.check();
  const int N = v.dim();
  if (q.d_out() != N) throw ShapeError("flow start map has the wrong number of components");
  const int P = q.d_in();
  if (param < 0 || param >= P) throw ShapeError("flow time variable out of range");
  const int D = std::min(q.dmax(), v.dmax());
  for (const auto& c : q.comps)
    if (std::abs(c.at_zero()) > 1e-14) throw PreconditionError("formal flow start must vanish at 0");

  SeriesMap qq = q.truncated(D);
  std::vector<PowerSeries> acc;
  for (int i = 0; i < N; ++i) acc.push_back(qq[i]);
  std::vector<PowerSeries> g;
  for (int i = 0; i < N; ++i) g.push_back(PowerSeries::variable(N, D, i));
  double fact = 1.0;
  for (int m = 1; m <= D; ++m) {
    for (auto& gi : g) gi = apply(v, gi);
    fact *= m;
    std::vector<const PowerSeries*> ptr;
    for (const auto& gi : g) ptr.push_back(&gi);
    std::vector<PowerSeries> gq = compose_many(ptr, qq);
    for (int i = 0; i < N; ++i) acc[i] += shift_up(gq[i], param, m, D) * cplx(1.0 / fact);
  }
  for (auto& a : acc) a.prune();
  return SeriesMap(acc);
}

SeriesMap flow_series(const HoloField& v, int dmax) {
  const int N = v.dim();
  const int D = std::min(dmax, v.dmax());
  std::vector<PowerSeries> q;
  for (int i = 0; i < N; ++i) q.push_back(PowerSeries::variable(N + 1, D, i + 1));
  return flow_apply(v, SeriesMap(q), 0);
}

FlowResult exp_flow(const HoloField& v, cplx t, const std::vector<cplx>& p0, const FlowOptions& opt) {
  const int N = v.dim();
  if (static_cast<int>(p0.size()) != N) throw ShapeError("flow start point has the wrong dimension");
  const int D = v.dmax();
  std::vector<PowerSeries> shift;
  for (int i = 0; i < N; ++i)
    shift.push_back(PowerSeries::variable(N, D, i) + PowerSeries::constant(N, D, p0[i]));
  SeriesMap shifted(shift);
  HoloField w;
  for (const auto& c : v.c) w.c.push_back(compose(c, shifted, ComposeOptions{true}));

  // a[m][i] = (V^m x_i)(p0)
  std::vector<std::vector<cplx>> a;
  std::vector<PowerSeries> g = shift;
  a.push_back(p0);
  for (int m = 1; m <= D; ++m) {
    for (auto& gi : g) gi = apply(w, gi);
    std::vector<cplx> row;
    for (const auto& gi : g) row.push_back(gi.at_zero());
    a.push_back(row);
  }

  FlowResult res;
  res.point.assign(N, 0.0);
  std::vector<PowerSeries> comps(N, PowerSeries(1, D));
  double fact = 1.0;
  cplx tm = 1.0;
  std::vector<cplx> top(N, 0.0);
  for (int m = 0; m <= D; ++m) {
    if (m > 0) {
      fact *= m;
      tm *= t;
    }
    for (int i = 0; i < N; ++i) {
      comps[i].coeff_ref(m) = a[m][i] / fact;
      res.point[i] += tm * a[m][i] / fact;
      if (m == D) top[i] = tm * a[m][i] / fact;
    }
  }
  res.map = SeriesMap(comps);
  double topn = 0, pn = 0;
  for (int i = 0; i < N; ++i) {
    topn = std::max(topn, std::abs(top[i]));
    pn = std::max(pn, std::abs(res.point[i]));
  }
  res.top_term = topn;
  const double scale = std::max(1.0, pn);
  if (topn > opt.trust_tol * scale) {
    double suggested = 0.5 * std::abs(t) * std::pow(opt.trust_tol * scale / topn, 1.0 / D);
    throw StepError("flow time exceeds the trust radius of the Lie series", suggested);
  }
  return res;
}

SeriesMap build_psi(const std::vector<HoloField>& X, const std::vector<HoloField>& L, int r, int n) {
  if (static_cast<int>(X.size()) != r || static_cast<int>(L.size()) != n)
    throw ShapeError("build_psi needs r fields X and n fields L");
  const int N = r + 2 * n;
  int D = 1 << 20;
  for (const auto& f : X) D = std::min(D, f.dmax());
  for (const auto& f : L) D = std::min(D, f.dmax());
  if (N == 0) return SeriesMap();
  std::vector<HoloField> factors;
  for (const auto& f : X) factors.push_back(f);
  for (const auto& f : L) factors.push_back(f);
  for (int j = 0; j < n; ++j) factors.push_back(z_field(r, n, D, j));
  for (const auto& f : factors)
    if (f.dim() != N) throw ShapeError("flow field has the wrong dimension");

  SeriesMap q = SeriesMap::zero(N, N, D);
  for (int k = N - 1; k >= 0; --k) {
    try {
      q = flow_apply(factors[k], q, k);
    } catch (Error& e) {
      if (e.stage().empty()) e.set_stage("flows");
      throw;
    }
  }
  return q;
}

FirstIntegrals first_integrals(const SeriesMap& psi, int r, int n) {
  FirstIntegrals out;
  out.eta1 = 1.0;
  if (n == 0) return out;
  psi.check();
  out.psi_inverse = invert_map(psi);
  for (int j = 0; j < n; ++j) out.w.push_back(out.psi_inverse[r + n + j]);
  for (const auto& w : out.w) {
    const int D = w.dmax();
    const Layout& lay = w.layout();
    double radius = 1.0;
    for (int k = 0; k <= 40; ++k, radius *= 0.5) {
      double total = 0, topsum = 0;
      for (int i = 0; i < w.size(); ++i) {
        double c = std::abs(w.coeff(i)) * std::pow(radius, lay.degree(i));
        total += c;
        if (lay.degree(i) >= D - 1) topsum += c;
      }
      if (topsum <= 1e-10 * total) break;
    }
    out.eta1 = std::min(out.eta1, radius);
  }
  return out;
}

}  // namespace frobflat
