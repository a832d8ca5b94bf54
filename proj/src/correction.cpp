#include "frobflat/correction.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "frobflat/funcspaces.hpp"

namespace frobflat {

PowerSeries laplace_prime(const PowerSeries& f, int r, int n) {
  if (f.dim() != r + 2 * n) throw ShapeError("laplace_prime: dimension mismatch");
  PowerSeries out(f.dim(), f.dmax() - 2);
  for (int k = 0; k < r; ++k) out += differentiate(differentiate(f, k), k);
  for (int a = r; a < r + 2 * n; ++a) out += 0.25 * differentiate(differentiate(f, a), a);
  return out;
}

PowerSeries laplace_prime_inverse(const PowerSeries& p, int r, int n) {
  const int dim = r + 2 * n;
  if (p.dim() != dim) throw ShapeError("laplace_prime_inverse: dimension mismatch");
  const int cap = p.dmax() + 2;
  PowerSeries rho(dim, cap);
  for (int k = 0; k < r; ++k) rho += mul(PowerSeries::variable(dim, cap, k), PowerSeries::variable(dim, cap, k));
  for (int a = r; a < dim; ++a)
    rho += 4.0 * mul(PowerSeries::variable(dim, cap, a), PowerSeries::variable(dim, cap, a));
  PowerSeries u(dim, cap);
  for (int k = 0; k <= p.dmax(); ++k) {
    PowerSeries pk = p.homogeneous_part(k);
    if (pk.is_zero()) continue;
    PowerSeries q = pk.padded(cap);  // Delta'^j p_k
    PowerSeries rpow = rho;          // rho^{j+1}
    double a = 0;
    for (int j = 0; 2 * j <= k; ++j) {
      const double c = 2.0 * (j + 1) * (2 * k - 2 * j + dim);
      a = (j == 0) ? 1.0 / c : -a / c;
      u += a * mul(rpow, q);
      q = laplace_prime(q, r, n).padded(cap);
      if (q.is_zero()) break;
      rpow = mul(rpow, rho);
    }
  }
  u.prune();
  return u;
}

namespace {

SeriesMatrix dmatrix(const std::vector<PowerSeries>& R, int r, int n, int kind) {
  // kind 0: d_t R^T (r x n), 1: d_z R^T (n x n), 2: d_zbar R^T (n x n); entry (row, l) = d_row R_l
  const int rows = kind == 0 ? r : n;
  SeriesMatrix m;
  m.rows = rows;
  m.cols = n;
  for (int i = 0; i < rows; ++i)
    for (int l = 0; l < n; ++l) {
      if (kind == 0) m.e.push_back(differentiate(R[l], i));
      else m.e.push_back(wirtinger(R[l], r, n, i, kind == 1 ? Wirt::dz : Wirt::dzbar));
    }
  return m;
}

SeriesMap h_map(const std::vector<PowerSeries>& R2, int r, int n, int cap) {
  const int dim = r + 2 * n;
  std::vector<PowerSeries> c;
  for (int k = 0; k < r; ++k) c.push_back(PowerSeries::variable(dim, cap, k));
  for (int j = 0; j < n; ++j) c.push_back(PowerSeries::variable(dim, cap, r + j) + R2[j].truncated(cap).real_part());
  for (int j = 0; j < n; ++j)
    c.push_back(PowerSeries::variable(dim, cap, r + n + j) + R2[j].truncated(cap).imag_part());
  return SeriesMap(c);
}

void check_frame(const ReducedFrame& f, const std::vector<PowerSeries>& R2) {
  if (static_cast<int>(R2.size()) != f.n) throw ShapeError("R2 needs n components");
  for (const auto& s : R2)
    if (s.dim() != f.r + 2 * f.n) throw ShapeError("R2 lives in the wrong dimension");
}

}  // namespace

TransformedBlocks transformed_blocks(const ReducedFrame& f, const std::vector<PowerSeries>& R2) {
  check_frame(f, R2);
  const int r = f.r, n = f.n, dim = r + 2 * n;
  int rcap = R2.empty() ? f.dmax() + 1 : R2[0].dmax();
  for (const auto& s : R2) rcap = std::min(rcap, s.dmax());
  const int cap = std::min(f.dmax(), rcap - 1);

  std::vector<PowerSeries> Rb;
  for (const auto& s : R2) Rb.push_back(s.conj_coeffs());
  SeriesMatrix I = SeriesMatrix::identity(n, dim, cap);
  SeriesMatrix Fm = f.F.truncated(cap);
  SeriesMatrix dzR = dmatrix(R2, r, n, 1).truncated(cap), dzbR = dmatrix(R2, r, n, 2).truncated(cap);
  SeriesMatrix dzRb = dmatrix(Rb, r, n, 1).truncated(cap), dzbRb = dmatrix(Rb, r, n, 2).truncated(cap);

  SeriesMatrix S = I + dzbRb + Fm * dzRb;
  SeriesMatrix PW = dzbR + Fm * (I + dzR);
  SeriesMatrix D = inverse(S) * PW;

  SeriesMatrix B;
  B.rows = r;
  B.cols = n;
  if (r > 0) {
    SeriesMatrix Em = f.E.truncated(cap);
    SeriesMatrix dtR = dmatrix(R2, r, n, 0).truncated(cap), dtRb = dmatrix(Rb, r, n, 0).truncated(cap);
    SeriesMatrix PV = dtR + Em * (I + dzR);
    SeriesMatrix QV = dtRb + Em * dzRb;
    B = PV - QV * D;
  }

  TransformedBlocks out;
  out.H = h_map(R2, r, n, rcap);
  out.Hinv = invert_map(out.H);
  out.D = compose(D, out.Hinv);
  out.B = r > 0 ? compose(B, out.Hinv) : B;
  return out;
}

std::vector<PowerSeries> divergence_functional(const ReducedFrame& f, const std::vector<PowerSeries>& R2) {
  const int r = f.r, n = f.n;
  TransformedBlocks tb = transformed_blocks(f, R2);
  const int cap = tb.D.dmax() - 1;
  std::vector<PowerSeries> div;
  for (int m = 0; m < n; ++m) {
    PowerSeries s(r + 2 * n, cap);
    for (int k = 0; k < r; ++k) s += differentiate(tb.B(k, m), k).truncated(cap);
    for (int j = 0; j < n; ++j) s += wirtinger(tb.D(j, m), r, n, j, Wirt::dz).truncated(cap);
    div.push_back(s);
  }
  std::vector<const PowerSeries*> ptr;
  for (const auto& s : div) ptr.push_back(&s);
  return compose_many(ptr, tb.H);
}

CorrectionResult quasilinear_correction(const ReducedFrame& f, const CorrectionConfig& cfg) {
  const int r = f.r, n = f.n, dim = r + 2 * n;
  CorrectionResult res;
  res.r = r;
  res.n = n;
  const int D = f.dmax();
  const Eigen::MatrixXcd E0 = f.E.at_zero(), F0 = f.F.at_zero();
  if ((E0.size() && E0.cwiseAbs().maxCoeff() > 1e-14) || (F0.size() && F0.cwiseAbs().maxCoeff() > 1e-14))
    throw PreconditionError("correction needs E(0) = 0 and F(0) = 0", "correction");
  const double en = f.E.rows ? f.E.anorm(1.0) : 0.0, fn = f.F.rows ? f.F.anorm(1.0) : 0.0;
  if (en > cfg.sigma || fn > cfg.sigma)
    throw PreconditionError("frame blocks exceed the smallness bound; scale the frame down", "correction");

  if (n == 0) {
    // An empty frame carries no cap; the identity is exact at degree one.
    res.H = SeriesMap::identity(dim, (f.E.e.empty() && f.F.e.empty()) ? 1 : D + 1);
    res.Hinv = res.H;
    res.transformed = f;
    return res;
  }

  std::vector<PowerSeries> R(n, PowerSeries(dim, D + 1));
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : 2 * (D + 2);
  double res_val = HUGE_VAL;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<PowerSeries> psi = divergence_functional(f, R);
    res_val = 0;
    for (const auto& p : psi) res_val = std::max(res_val, p.max_abs());
    res.trace.push_back(res_val);
    if (!std::isfinite(res_val)) break;
    if (res_val < cfg.tol) break;
    // Past the degree filtration only rounding remains; stop once it stalls.
    if (it > D + 2 && res_val >= 0.5 * res.trace[res.trace.size() - 2]) break;
    for (int m = 0; m < n; ++m) {
      R[m] -= laplace_prime_inverse(psi[m], r, n).truncated(D + 1);
      R[m].prune();
    }
  }
  if (!std::isfinite(res_val) || res_val > 1e-9)
    throw DivergenceError("correction iteration did not converge", res.trace);

  TransformedBlocks tb = transformed_blocks(f, R);
  res.R2 = R;
  res.H = tb.H;
  res.Hinv = tb.Hinv;
  res.transformed.r = r;
  res.transformed.n = n;
  res.transformed.E = tb.B;
  res.transformed.F = tb.D;
  res.divergence_residual = res_val;
  double norm = 0;
  for (const auto& s : R) norm = std::max(norm, anorm(s, 1.0).value);
  res.r2_norm = norm;
  return res;
}

PowerSeries reflect_conj(const PowerSeries& f, int r, int n) {
  PowerSeries g = f.conj_coeffs();
  const Layout& L = g.layout();
  for (int i = 0; i < g.size(); ++i) {
    const int* e = L.exponents(i);
    int ydeg = 0;
    for (int j = 0; j < n; ++j) ydeg += e[r + n + j];
    if (ydeg % 2) g.coeff_ref(i) = -g.coeff(i);
  }
  return g;
}

std::string trace_json(const CorrectionResult& c) {
  nlohmann::json j;
  j["iterations"] = c.trace.size();
  j["residuals"] = c.trace;
  j["divergence_residual"] = c.divergence_residual;
  j["r2_anorm"] = c.r2_norm;
  return j.dump(2);
}

}  // namespace frobflat
