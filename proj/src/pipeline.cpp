#include "frobflat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "frobflat/correction.hpp"
#include "frobflat/flows.hpp"
#include "frobflat/funcspaces.hpp"
#include "frobflat/json_io.hpp"

namespace frobflat {

namespace {

template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

PowerSeries scale_args(PowerSeries f, double s) {
  const Layout& L = f.layout();
  for (int i = 0; i < f.size(); ++i) f.coeff_ref(i) *= std::pow(s, L.degree(i));
  return f;
}

// Largest dyadic radius <= 1 where the top two retained degrees are below thr of the A-norm.
// Two degrees, since parity can leave the very top one empty.
double trust_radius(const std::vector<PowerSeries>& comps, double thr) {
  double eta = 1.0;
  for (const auto& f : comps) {
    const Layout& L = f.layout();
    const int D = f.dmax();
    double radius = 1.0;
    for (int k = 0; k <= 40; ++k, radius *= 0.5) {
      double total = 0, top = 0;
      for (int i = 0; i < f.size(); ++i) {
        double c = std::abs(f.coeff(i)) * std::pow(radius, L.degree(i));
        total += c;
        if (L.degree(i) >= D - 1) top += c;
      }
      if (top <= thr * total) break;
    }
    eta = std::min(eta, radius);
  }
  return eta;
}

// h o w with h holomorphic and h o w o H free of pure z-monomials of degree >= 2.
std::vector<PowerSeries> canonical_gauge(const std::vector<PowerSeries>& w, const SeriesMap& H, int r, int n) {
  SeriesMap wm(w);
  SeriesMap wH = compose(wm, H);
  const int cap = wH.dmax();
  std::vector<PowerSeries> sub;
  for (int k = 0; k < r; ++k) sub.emplace_back(n, cap);
  for (int j = 0; j < n; ++j) sub.push_back(PowerSeries::variable(n, cap, j, 0.5));
  for (int j = 0; j < n; ++j) sub.push_back(PowerSeries::variable(n, cap, j, cplx(0, -0.5)));
  SeriesMap W = compose(wH, SeriesMap(sub));
  SeriesMap h = invert_map(W);
  return compose(h, wm).comps;
}

std::vector<cplx> as_cplx(const std::vector<double>& v) { return std::vector<cplx>(v.begin(), v.end()); }

Eigen::VectorXcd field_at(const VectorField& v, const std::vector<double>& x) {
  std::vector<cplx> c = v.eval(x);
  return Eigen::Map<Eigen::VectorXcd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

// Index of d/du_a (a < r) or d/dwbar_{a-r} in the (dt, dz, dzbar) slots.
int target_slot(int a, int r, int n) { return a < r ? a : r + n + (a - r); }

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<VectorField> recombine(const std::vector<VectorField>& fields, const Eigen::MatrixXcd& M) {
  const int m = static_cast<int>(fields.size());
  std::vector<VectorField> out;
  for (int k = 0; k < m; ++k) {
    VectorField v;
    bool first = true;
    for (int i = 0; i < m; ++i) {
      if (M(i, k) == cplx(0)) continue;
      VectorField t = M(i, k) * fields[i];
      v = first ? t : v + t;
      first = false;
    }
    if (first) v = VectorField(fields[0].r, fields[0].n, fields[0].dmax());
    out.push_back(v);
  }
  return out;
}

std::string describe_probe(const ProbeReport& p, int N, int m, double commutator_tol) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < p.point.size(); ++i) os << (i ? ", " : "") << p.point[i];
  os << "): ";
  if (p.rank_full != N) os << "fields and conjugates span rank " << p.rank_full << " of " << N;
  else if (p.commutator_residual > commutator_tol) os << "bracket leaves the span by " << p.commutator_residual;
  else if (p.rank_LX != m) os << "structure has rank " << p.rank_LX << " instead of " << m;
  else if (p.intersection_dim != p.rank_X) os << "span{L,X} meets its conjugate in dimension " << p.intersection_dim;
  else if (p.x_imag_residual > 1e-12) os << "X fields are not real";
  else os << "dimension formula fails";
  return os.str();
}

bool probe_ok(const ProbeReport& p, int N, int m, double commutator_tol) {
  return p.rank_full == N && p.commutator_residual <= commutator_tol && p.rank_LX == m &&
         p.intersection_dim == p.rank_X && p.rank_X == m - (N - m) && p.x_imag_residual <= 1e-12 && p.dim_formula;
}

struct Attempt {
  bool ok = false;
  std::string why;
  FlattenResult res;
};

}  // namespace

std::vector<double> Chart::to_input(const std::vector<double>& v) const {
  std::vector<double> xi = phi.eval_real(v);
  Eigen::VectorXd y = normalization.shift + normalization.matrix * Eigen::Map<Eigen::VectorXd>(xi.data(), dim());
  return std::vector<double>(y.data(), y.data() + y.size());
}

std::vector<VectorField> Chart::normalized_fields(const std::vector<VectorField>& X,
                                                  const std::vector<VectorField>& L) const {
  std::vector<VectorField> all(X.begin(), X.end());
  all.insert(all.end(), L.begin(), L.end());
  std::vector<VectorField> out;
  for (const auto& v : recombine(all, recombination)) out.push_back(pullback_affine(normalization, v));
  return out;
}

std::string content_hash(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string fields_hash(const std::vector<VectorField>& X, const std::vector<VectorField>& L) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto* group : {&X, &L})
    for (const auto& v : *group) {
      nlohmann::json f;
      f["r"] = v.r;
      f["n"] = v.n;
      for (const auto& c : v.c) f["c"].push_back(series_json(c));
      j.push_back(f);
    }
  return content_hash(j.dump());
}

std::vector<std::vector<double>> verification_probes(int dim, uint64_t seed, int count) {
  return ball_probes(dim, 0.5, count, seed * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL);
}

FlattenResult flatten(const std::vector<VectorField>& Xin, const std::vector<VectorField>& Lin,
                      const FlattenConfig& cfg) {
  const int r = static_cast<int>(Xin.size()), n = static_cast<int>(Lin.size());
  if (r + n == 0) throw ShapeError("flatten needs at least one field", "structure");
  const int N = r + 2 * n, m = r + n;
  for (const auto* group : {&Xin, &Lin})
    for (const auto& v : *group)
      if (v.r != r || v.n != n) throw ShapeError("fields must be r X's and n L's on R^r x C^n", "structure");
  std::vector<double> zeta0 = cfg.zeta0.empty() ? std::vector<double>(N, 0.0) : cfg.zeta0;
  if (static_cast<int>(zeta0.size()) != N) throw ShapeError("base point has the wrong dimension", "structure");

  auto cut = [&](const std::vector<VectorField>& vs) {
    std::vector<VectorField> out;
    for (const auto& v : vs) out.push_back(v.dmax() > cfg.dmax ? v.truncated(cfg.dmax) : v);
    return out;
  };
  const std::vector<VectorField> X = cut(Xin), L = cut(Lin);

  std::vector<StageRecord> trace;

  // structure at probes around the base point
  staged("structure", [&] {
    auto pts = ball_probes(N, cfg.radius / 2, cfg.probes, cfg.seed);
    for (auto& p : pts)
      for (int i = 0; i < N; ++i) p[i] += zeta0[i];
    pts.insert(pts.begin(), zeta0);
    StructureOptions sopt;
    StructureReport rep = check_structure(X, L, pts, sopt);
    for (size_t i = 0; i < rep.probes.size(); ++i)
      if (!probe_ok(rep.probes[i], N, m, sopt.commutator_tol))
        throw PreconditionError("structure check failed at probe " + std::to_string(i) + " " +
                                    describe_probe(rep.probes[i], N, m, sopt.commutator_tol),
                                "structure");
    StageRecord s{"structure", {}};
    s.info["probes"] = pts.size();
    s.info["max_commutator_residual"] = rep.max_commutator_residual;
    trace.push_back(s);
    return 0;
  });

  Normalization nz = staged("normalize", [&] { return point_normalize(X, L, zeta0); });
  {
    StageRecord s{"normalize", {}};
    double dev = (nz.chart.matrix - Eigen::MatrixXd::Identity(N, N)).cwiseAbs().maxCoeff();
    s.info["matrix_deviation"] = dev;
    trace.push_back(s);
  }
  std::vector<VectorField> V(nz.X.begin(), nz.X.end());
  V.insert(V.end(), nz.L.begin(), nz.L.end());
  for (auto& v : V)
    if (v.dmax() > cfg.dmax) v = v.truncated(cfg.dmax);

  Reduction red = staged("reduce", [&] {
    ReduceOptions ro;
    ro.seed = cfg.seed;
    return reduce_to_EF(Frame::from_fields(nz.X, nz.L), ro);
  });
  {
    StageRecord s{"reduce", {}};
    s.info["eta0"] = red.eta0;
    s.info["det_min"] = red.det_min;
    trace.push_back(s);
  }

  const auto probes = ball_probes(N, 0.5, cfg.probes, cfg.seed);

  auto attempt = [&](double gamma) {
    Attempt at;
    ReducedFrame sf = staged("scale", [&] { return scale_frame(red.frame, gamma, red.eta0); });
    CorrectionResult corr;
    try {
      corr = quasilinear_correction(sf);
    } catch (PreconditionError& e) {
      if (e.stage() != "correction") throw;
      at.why = e.what();
      return at;
    } catch (DivergenceError& e) {
      at.why = e.what();
      return at;
    }

    FlattenResult& res = at.res;
    Chart& ch = res.chart;
    ch.r = r;
    ch.n = n;
    ch.gamma = gamma;
    ch.eta0 = red.eta0;
    ch.normalization = nz.chart;
    ch.recombination = nz.recombination;

    auto flows = staged("flows", [&] {
      std::vector<HoloField> hx, hl;
      if (n == 0) {
        // empty blocks carry no cap: the reduced fields are the coordinate fields
        for (int k = 0; k < r; ++k) hx.push_back(complexify(VectorField::basis(r, 0, cfg.dmax, k)));
      } else {
        for (const auto& v : corr.transformed.X()) hx.push_back(complexify(v));
        for (const auto& v : corr.transformed.L()) hl.push_back(complexify(v));
      }
      SeriesMap psi = build_psi(hx, hl, r, n);
      return first_integrals(psi, r, n);
    });
    ch.eta1 = flows.eta1;

    SeriesMap Phi3 = staged("chart", [&] {
      if (n == 0) return SeriesMap::identity(N, cfg.dmax);
      std::vector<PowerSeries> wt = canonical_gauge(flows.w, corr.H, r, n);
      const int cap = SeriesMap(wt).dmax();
      std::vector<PowerSeries> g;
      for (int k = 0; k < r; ++k) g.push_back(PowerSeries::variable(N, cap, k));
      for (int j = 0; j < n; ++j) g.push_back(wt[j].real_part());
      for (int j = 0; j < n; ++j) g.push_back(wt[j].imag_part());
      SeriesMap G(g);
      SeriesMap first = compose(SeriesMap(wt), corr.H);
      for (auto& c : first.comps) res.w.push_back(gamma * scale_args(c, 1.0 / gamma));
      return compose(corr.Hinv, invert_map(G));
    });
    ch.eta3 = std::min(ch.eta1, trust_radius(Phi3.comps, cfg.trust));
    ch.K2 = 1.0 / (gamma * ch.eta3);
    for (const auto& c : Phi3.comps) ch.phi.comps.push_back(gamma * scale_args(c, ch.eta3));
    // d Phi_4(0) = K2^{-1} I, checked then imposed
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        std::vector<int> e(N, 0);
        e[j] = 1;
        const double want = i == j ? 1.0 / ch.K2 : 0.0;
        if (std::abs(ch.phi[i].coeff(e) - want) > 1e-12 / ch.K2)
          throw Error("chart linear part deviates from the scaled identity", "chart");
        ch.phi[i].set(e, want);
      }
    for (auto& c : ch.phi.comps) c.coeff_ref(0) = 0.0;

    // A = K2 N^{-1} - I with [Phi^* X; Phi^* L] = N [du; dwbar] + (dw part)
    std::vector<VectorField> pv;
    staged("chart", [&] {
      for (const auto& v : V) pv.push_back(pullback(ch.phi, v));
      return 0;
    });
    const int cap = pv[0].dmax();
    SeriesMatrix Nm(m, m, N, cap);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) Nm(a, b) = pv[a].c[target_slot(b, r, n)].truncated(cap);
    res.A = (ch.K2 * Eigen::MatrixXcd::Identity(m, m)) * inverse(Nm) - SeriesMatrix::identity(m, N, cap);
    const Eigen::MatrixXcd A0 = res.A.at_zero();
    if (A0.cwiseAbs().maxCoeff() > 1e-12) throw Error("A(0) does not vanish", "chart");
    for (auto& s : res.A.e) {
      s.coeff_ref(0) = 0.0;
      s.prune();
    }
    res.a_norm = res.A.anorm(1.0);

    // series-level residuals and determinant range
    SeriesMatrix J = jacobian(ch.phi);
    SeriesMatrix Q = (Eigen::MatrixXcd::Identity(m, m) / ch.K2) * (SeriesMatrix::identity(m, N, cap) + res.A);
    std::vector<VectorField> Y;
    for (int a = 0; a < m; ++a) {
      VectorField y = multiply(Q(a, 0), pv[0]);
      for (int b = 1; b < m; ++b) y = y + multiply(Q(a, b), pv[b]);
      Y.push_back(y);
    }
    ResidualReport& in = res.internal;
    in.det_min = HUGE_VAL;
    in.det_max = 0;
    for (const auto& p : probes) {
      ProbeResidual pr;
      pr.point = p;
      for (int a = 0; a < m; ++a) {
        std::vector<cplx> c = pv[a].eval(p), y = Y[a].eval(p);
        for (int j = 0; j < n; ++j) pr.span = std::max(pr.span, std::abs(c[r + j]));
        for (int s = 0; s < N; ++s)
          pr.relation = std::max(pr.relation, std::abs(y[s] - (s == target_slot(a, r, n) ? 1.0 : 0.0)));
        for (int b = a + 1; b < m; ++b)
          for (cplx v : commutator(Y[a], Y[b]).eval(p)) pr.commutator = std::max(pr.commutator, std::abs(v));
      }
      pr.det = J.eval(as_cplx(p)).real().determinant();
      in.span = std::max(in.span, pr.span);
      in.relation = std::max(in.relation, pr.relation);
      in.commutator = std::max(in.commutator, pr.commutator);
      in.det_min = std::min(in.det_min, std::abs(pr.det));
      in.det_max = std::max(in.det_max, std::abs(pr.det));
      in.probes.push_back(pr);
    }
    ch.det_min = in.det_min;
    ch.det_max = in.det_max;

    StageRecord s{"correction", {}};
    s.info["iterations"] = corr.trace.size();
    s.info["divergence_residual"] = corr.divergence_residual;
    s.info["r2_anorm"] = corr.r2_norm;
    ch.trace.push_back(s);
    StageRecord f{"flows", {}};
    f.info["eta1"] = ch.eta1;
    ch.trace.push_back(f);
    StageRecord c{"chart", {}};
    c.info["eta3"] = ch.eta3;
    c.info["K2"] = ch.K2;
    c.info["a_norm"] = res.a_norm;
    ch.trace.push_back(c);
    at.ok = res.a_norm <= cfg.a_bound;
    if (!at.ok) at.why = "A-norm " + std::to_string(res.a_norm) + " above the bound";
    return at;
  };

  double gamma = std::min(red.eta0 / 2, 1.0);
  std::vector<double> tried;
  for (int h = 0; h <= cfg.max_halvings; ++h, gamma *= 0.5) {
    Attempt at = attempt(gamma);
    StageRecord s{"scale", {}};
    s.info["gamma"] = gamma;
    s.info["accepted"] = at.ok;
    if (!at.ok) s.info["reason"] = at.why;
    trace.push_back(s);
    tried.push_back(gamma);
    if (!at.ok) continue;
    FlattenResult res = std::move(at.res);
    for (auto& t : res.chart.trace) trace.push_back(std::move(t));
    res.chart.trace = std::move(trace);
    res.input_hash = fields_hash(Xin, Lin);
    res.dmax = cfg.dmax;
    return res;
  }
  DivergenceError e("no admissible scale within " + std::to_string(cfg.max_halvings) + " halvings", tried);
  e.set_stage("scale");
  throw e;
}

ResidualReport verify_chart(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                            const FlattenResult& res, const std::vector<std::vector<double>>& probes) {
  if (fields_hash(X, L) != res.input_hash)
    throw ProvenanceError("provenance mismatch: the fields do not match the result", "verify");
  const Chart& ch = res.chart;
  const int r = ch.r, n = ch.n, N = ch.dim(), m = r + n;
  std::vector<VectorField> all(X.begin(), X.end());
  all.insert(all.end(), L.begin(), L.end());
  if (static_cast<int>(all.size()) != m) throw ShapeError("field count differs from the chart", "verify");
  std::vector<VectorField> V = recombine(all, ch.recombination);
  std::vector<std::vector<VectorField>> br(m, std::vector<VectorField>(m));
  for (int b = 0; b < m; ++b)
    for (int d = b + 1; d < m; ++d) br[b][d] = commutator(V[b], V[d]);
  std::vector<SeriesMatrix> dAe;
  for (int e = 0; e < N; ++e) {
    SeriesMatrix D = res.A;
    for (auto& s : D.e) s = differentiate(s, e);
    dAe.push_back(D);
  }
  const double detA = ch.normalization.matrix.determinant();
  const double h = 1e-3;

  ResidualReport rep;
  rep.det_min = HUGE_VAL;
  for (const auto& p : probes) {
    if (static_cast<int>(p.size()) != N) throw ShapeError("probe has the wrong dimension", "verify");
    Eigen::MatrixXd J(N, N);
    for (int e = 0; e < N; ++e) {
      auto at = [&](double s) {
        std::vector<double> x = p;
        x[e] += s;
        return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(ch.to_input(x).data(), N));
      };
      J.col(e) = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
    }
    const std::vector<double> q = ch.to_input(p);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(J.cast<cplx>());
    std::vector<Eigen::VectorXcd> g(m);
    for (int b = 0; b < m; ++b) g[b] = lu.solve(to_real_basis(r, n, field_at(V[b], q)));
    const std::vector<cplx> pc = as_cplx(p);
    const Eigen::MatrixXcd Q = (Eigen::MatrixXcd::Identity(m, m) + res.A.eval(pc)) / ch.K2;
    std::vector<Eigen::MatrixXcd> dQ;
    for (int e = 0; e < N; ++e) dQ.push_back(dAe[e].eval(pc) / ch.K2);

    ProbeResidual pr;
    pr.point = p;
    for (int a = 0; a < m; ++a) {
      Eigen::VectorXcd c = from_real_basis(r, n, g[a]);
      for (int j = 0; j < n; ++j) pr.span = std::max(pr.span, std::abs(c(r + j)));
      Eigen::VectorXcd y = Eigen::VectorXcd::Zero(N);
      for (int b = 0; b < m; ++b) y += Q(a, b) * g[b];
      Eigen::VectorXcd yc = from_real_basis(r, n, y);
      yc(target_slot(a, r, n)) -= 1.0;
      pr.relation = std::max(pr.relation, yc.cwiseAbs().maxCoeff());
    }
    // [Y_a, Y_c] with Y = Q G, G = Phi^* V: brackets of G from the input brackets
    auto deriv = [&](const Eigen::VectorXcd& dir, int a, int b) {
      cplx s = 0;
      for (int e = 0; e < N; ++e) s += dir(e) * dQ[e](a, b);
      return s;
    };
    for (int a = 0; a < m; ++a)
      for (int c = a + 1; c < m; ++c) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N);
        for (int b = 0; b < m; ++b)
          for (int d = 0; d < m; ++d) {
            if (b != d) {
              const bool swap = b > d;
              Eigen::VectorXcd bb = lu.solve(to_real_basis(r, n, field_at(br[swap ? d : b][swap ? b : d], q)));
              v += (swap ? -1.0 : 1.0) * Q(a, b) * Q(c, d) * bb;
            }
            v += Q(a, b) * deriv(g[b], c, d) * g[d] - Q(c, d) * deriv(g[d], a, b) * g[b];
          }
        pr.commutator = std::max(pr.commutator, v.cwiseAbs().maxCoeff());
      }
    pr.det = J.determinant() / detA;
    rep.span = std::max(rep.span, pr.span);
    rep.relation = std::max(rep.relation, pr.relation);
    rep.commutator = std::max(rep.commutator, pr.commutator);
    rep.det_min = std::min(rep.det_min, std::abs(pr.det));
    rep.det_max = std::max(rep.det_max, std::abs(pr.det));
    rep.probes.push_back(pr);
  }
  if (probes.empty()) rep.det_min = 0;
  return rep;
}

int norm_grid(int dim, int requested) {
  int g = std::max(requested, 5);
  while (g > 5 && std::pow(g, dim) > 20000.0) --g;
  return g;
}

double input_norm(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                  const std::vector<double>& zeta0, double radius, int grid, double s) {
  std::vector<VectorField> all(X.begin(), X.end());
  all.insert(all.end(), L.begin(), L.end());
  const int N = all[0].size();
  const int g = norm_grid(N, grid);
  std::vector<double> z0 = zeta0.empty() ? std::vector<double>(N, 0.0) : zeta0;
  GridField f = GridField::sample(N, g, radius, N * static_cast<int>(all.size()), [&](const double* x, cplx* out) {
    std::vector<double> y(N);
    for (int i = 0; i < N; ++i) y[i] = z0[i] + x[i];
    int k = 0;
    for (const auto& v : all)
      for (cplx c : v.eval(y)) out[k++] = c;
  });
  return zygmund_estimate(f, s).value;
}

double chart_norm(const FlattenResult& res, int grid, double s) {
  SeriesMap m = res.chart.phi;
  for (auto& c : m.comps) c *= res.chart.K2;
  GridField f = GridField::from_map(m, 1.0, norm_grid(res.chart.dim(), grid));
  return zygmund_estimate(f, s).value;
}

void add_norm_table(ResidualReport& rep, const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                    const FlattenResult& res, double radius, int grid, double s0) {
  std::vector<double> zeta0(res.chart.normalization.shift.data(),
                            res.chart.normalization.shift.data() + res.chart.normalization.shift.size());
  rep.norms.push_back({"inputs", s0 + 1, input_norm(X, L, zeta0, radius, grid, s0 + 1)});
  for (double s : {s0, s0 + 1, s0 + 2}) rep.norms.push_back({"chart", s, chart_norm(res, grid, s)});
}

Gates check_gates(const FlattenResult& res, const ResidualReport& fd, double tol) {
  Gates g;
  g.tol = tol;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) g.failed.push_back(what);
  };
  need(fd.span <= tol, "span residual");
  need(fd.commutator <= tol, "commutator residual");
  need(fd.relation <= tol, "A relation residual");
  need(fd.det_min > 0, "Jacobian determinant");
  need(res.a_norm <= 0.25, "A-norm bound");
  // Independent and series-level span residuals agree within 10x above the difference noise.
  const double floor = 1e-10;
  const double lo = std::max(std::min(fd.span, res.internal.span), floor);
  need(std::max(fd.span, res.internal.span) <= 10 * lo, "cross-validation of the span residual");
  g.ok = g.failed.empty();
  return g;
}

// ---------------------------------------------------------------- corpus

Instance flat_instance(int r, int n, int dmax) {
  Instance in;
  in.label = "flat-" + std::to_string(r) + "-" + std::to_string(n);
  in.r = r;
  in.n = n;
  for (int k = 0; k < r; ++k) in.X.push_back(VectorField::basis(r, n, dmax, k));
  for (int j = 0; j < n; ++j) in.L.push_back(VectorField::basis(r, n, dmax, r + n + j));
  return in;
}

Instance beltrami_instance(double eps, int dmax) {
  Instance in;
  char buf[32];
  std::snprintf(buf, sizeof buf, "beltrami-%g", eps);
  in.label = buf;
  in.r = 0;
  in.n = 1;
  VectorField l = VectorField::basis(0, 1, dmax, 1);
  l.c[0] = PowerSeries::variable(2, dmax, 0, eps) + PowerSeries::variable(2, dmax, 1, cplx(0, -eps));
  in.L.push_back(l);
  return in;
}

Instance manufactured_instance(int r, int n, int dmax, uint64_t seed, double eps) {
  const int N = r + 2 * n;
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<PowerSeries> p;
  // spread the perturbation so its size does not grow with the dimension
  const double each = eps / N;
  for (int i = 0; i < N; ++i) {
    PowerSeries c = PowerSeries::variable(N, dmax, i);
    const Layout& lay = c.layout();
    for (int k = 0; k < c.size() && lay.degree(k) <= 3; ++k) {
      const int d = lay.degree(k);
      if (d == 0) continue;
      const double v = U(rng);
      c.coeff_ref(k) += (d == 1 ? 0.5 : 1.0) * each * v;
    }
    p.push_back(c);
  }
  SeriesMap P(p);
  Instance in;
  in.label = "manufactured-" + std::to_string(r) + "-" + std::to_string(n) + "-s" + std::to_string(seed);
  in.r = r;
  in.n = n;
  for (int k = 0; k < r; ++k) in.X.push_back(pushforward(P, VectorField::basis(r, n, dmax, k)));
  for (int j = 0; j < n; ++j) in.L.push_back(pushforward(P, VectorField::basis(r, n, dmax, r + n + j)));
  // X fields are real up to rounding of the inversion
  for (auto& v : in.X) {
    std::vector<PowerSeries> xi = to_real_basis(v);
    for (auto& c : xi) c = c.real_part();
    v = from_real_basis(r, n, xi);
  }
  return in;
}

Instance prescaled(const Instance& in, double g) {
  Instance out = in;
  char buf[32];
  std::snprintf(buf, sizeof buf, "@%g", g);
  out.label += buf;
  out.prescale = in.prescale * g;
  for (auto* group : {&out.X, &out.L})
    for (auto& v : *group)
      for (auto& c : v.c) c = scale_args(c, g);
  return out;
}

std::vector<GainRow> regularity_gain_probe(const std::vector<Instance>& family, const GainConfig& cfg) {
  std::vector<GainRow> rows;
  for (const auto& in : family) {
    FlattenResult res = flatten(in.X, in.L, cfg.flatten);
    GainRow row;
    row.example = in.label;
    row.prescale = in.prescale;
    row.gamma = res.chart.gamma;
    row.K2 = res.chart.K2;
    row.input_norm = input_norm(in.X, in.L, cfg.flatten.zeta0, cfg.flatten.radius, cfg.grid, cfg.s0 + 1);
    row.chart_norm = chart_norm(res, cfg.grid, cfg.s0 + 2);
    row.ratio = row.chart_norm / (1.0 + row.input_norm);
    rows.push_back(row);
  }
  return rows;
}

bool ratios_bounded(const std::vector<GainRow>& rows, double factor) {
  if (rows.empty()) return true;
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.ratio);
  std::sort(v.begin(), v.end());
  const double med = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  return v.front() >= med / factor && v.back() <= med * factor;
}

std::vector<Instance> default_corpus(int dmax, uint64_t seed) {
  std::vector<Instance> c;
  for (double eps : {0.02, 0.04, 0.06, 0.08, 0.1}) c.push_back(beltrami_instance(eps, dmax));
  Instance b = beltrami_instance(0.1, dmax);
  for (double g : {0.5, 0.25}) c.push_back(prescaled(b, g));
  Instance m = manufactured_instance(1, 1, dmax, seed);
  c.push_back(m);
  for (double g : {0.5, 0.25}) c.push_back(prescaled(m, g));
  return c;
}

}  // namespace frobflat
