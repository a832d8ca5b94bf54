#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "frobflat/elliptic.hpp"

using namespace frobflat;

namespace {

const cplx I(0, 1);

struct Mode {
  std::vector<int> k;
  std::vector<cplx> c;  // one coefficient per component
};

// Random trigonometric polynomial with integer lattice modes |k_a| <= kmax.
std::vector<Mode> random_modes(std::mt19937_64& rng, int dim, int ncomp, int count, int kmax) {
  std::uniform_int_distribution<int> K(-kmax, kmax);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<Mode> modes;
  for (int m = 0; m < count; ++m) {
    Mode md;
    for (int a = 0; a < dim; ++a) md.k.push_back(K(rng));
    for (int c = 0; c < ncomp; ++c) md.c.push_back(cplx(U(rng), U(rng)));
    modes.push_back(md);
  }
  return modes;
}

// Mode sum with an optional per-mode multiplier; kappa = pi k / L.
PeriodicGrid synth(const std::vector<Mode>& modes, int dim, int n, double L, int ncomp,
                   double (*mult)(const std::vector<double>&, int, int) = nullptr, int r = 0, int nn = 0) {
  return PeriodicGrid::sample(dim, n, L, ncomp, [&](const double* x, cplx* out) {
    for (int c = 0; c < ncomp; ++c) out[c] = 0;
    for (const auto& md : modes) {
      std::vector<double> kap(dim);
      double phase = 0;
      for (int a = 0; a < dim; ++a) {
        kap[a] = M_PI * md.k[a] / L;
        phase += kap[a] * x[a];
      }
      double f = mult ? mult(kap, r, nn) : 1.0;
      for (int c = 0; c < ncomp; ++c) out[c] += f * md.c[c] * std::exp(I * phase);
    }
  });
}

// -(sum d_t^2 + sum d_z d_zbar) on a plane wave, computed by hand.
double laplace_like(const std::vector<double>& k, int r, int n) {
  double s = 0;
  for (int a = 0; a < r; ++a) s += k[a] * k[a];
  for (int j = 0; j < n; ++j) s += 0.25 * (k[r + j] * k[r + j] + k[r + n + j] * k[r + n + j]);
  return s;
}

PeriodicGrid random_grid(std::mt19937_64& rng, int dim, int n, double L, int ncomp) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  PeriodicGrid g(dim, n, L, ncomp);
  for (auto& v : g.data) v = cplx(U(rng), U(rng));
  return g;
}

std::vector<std::pair<int, int>> shapes() { return {{0, 1}, {1, 1}, {2, 0}, {2, 1}}; }

int grid_n(int dim) { return dim <= 3 ? 16 : 10; }

}  // namespace

TEST_CASE("series form of the operator on small examples") {
  {
    EllipticOperator op(0, 1);
    PowerSeries zb = PowerSeries::variable(2, 3, 0) + PowerSeries::variable(2, 3, 1, -I);
    auto rows = apply_E(op, {zb});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].max_abs() < 1e-15);
  }
  {
    EllipticOperator op(2, 0);
    auto rows = apply_E(op, {PowerSeries::variable(2, 3, 1), PowerSeries::variable(2, 3, 0, -1.0)});
    REQUIRE(rows.size() == 2);
    CHECK(std::abs(rows[0].at_zero() - 2.0) < 1e-15);
    CHECK(rows[0].max_degree() == 0);
    CHECK(rows[1].max_abs() < 1e-15);
  }
  EllipticOperator op(2, 2);
  CHECK(op.out_comps() == 1 + 4 + 1 + 1);
  CHECK(op.row_names().back() == "div");
}

TEST_CASE("grid operator matches the series operator on plane waves") {
  // A single mode e^{i kappa x} is also the series of its Taylor expansion;
  // compare the symbol against Wirtinger calculus on the linear part.
  EllipticOperator op(1, 1);
  std::vector<double> k{1.0, 2.0, -3.0};
  Eigen::MatrixXcd S = op.symbol(k);
  // Linear series u_c = i (k . x) e_c has exact Wirtinger derivatives.
  for (int c = 0; c < op.in_comps(); ++c) {
    std::vector<PowerSeries> u(op.in_comps(), PowerSeries(3, 2));
    for (int a = 0; a < 3; ++a) u[c] += PowerSeries::variable(3, 2, a, I * k[a]);
    auto rows = apply_E(op, u);
    for (int o = 0; o < op.out_comps(); ++o) CHECK(std::abs(rows[o].at_zero() - S(o, c)) < 1e-14);
  }
}

TEST_CASE("E*E equals the Laplace-type operator on trigonometric polynomials") {
  std::mt19937_64 rng(2024);
  for (auto [r, n] : shapes()) {
    EllipticOperator op(r, n);
    const int d = op.dim(), N = grid_n(d);
    const double L = 1.0;
    auto modes = random_modes(rng, d, op.in_comps(), 6, N / 2 - 1);
    PeriodicGrid u = synth(modes, d, N, L, op.in_comps());
    PeriodicGrid lhs = apply_E_adjoint(op, apply_E(op, u));
    PeriodicGrid rhs = synth(modes, d, N, L, op.in_comps(), laplace_like, r, n);
    CAPTURE(r);
    CAPTURE(n);
    CHECK((lhs - rhs).sup() <= 1e-12 * std::max(1.0, rhs.sup()));
  }
}

TEST_CASE("symbol certificate across the band") {
  for (auto [r, n] : shapes()) {
    EllipticOperator op(r, n);
    SymbolCertificate c = certify_symbol(op, grid_n(op.dim()), 1.0);
    CAPTURE(r);
    CAPTURE(n);
    CHECK(c.min_singular > 0.0);
    CHECK(c.min_singular >= 0.5 * M_PI - 1e-12);  // smallest nonzero frequency, x-direction weight 1/2
    CHECK(c.max_square_defect < 1e-12 * std::pow(M_PI * grid_n(op.dim()), 2));
  }
}

TEST_CASE("adjoint identity on random periodic fields") {
  std::mt19937_64 rng(7);
  for (auto [r, n] : shapes()) {
    EllipticOperator op(r, n);
    const int d = op.dim(), N = grid_n(d);
    PeriodicGrid u = random_grid(rng, d, N, 1.0, op.in_comps());
    PeriodicGrid v = random_grid(rng, d, N, 1.0, op.out_comps());
    cplx a = inner(apply_E(op, u), v);
    cplx b = inner(u, apply_E_adjoint(op, v));
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("spectral inverse") {
  EllipticOperator op(1, 1);
  // single mode: multiplied by 1/(|kt|^2 + |kx|^2/4)
  std::vector<Mode> m{{{1, -2, 3}, {1.0, I}}};
  PeriodicGrid u = synth(m, 3, 16, 1.0, 2);
  PeriodicGrid pu = solve_P(op, u);
  const double s = M_PI * M_PI * (1 + 0.25 * (4 + 9));
  CHECK((pu - (1.0 / s) * u).sup() < 1e-14);

  PeriodicGrid c = PeriodicGrid::sample(3, 16, 1.0, 2, [](const double*, cplx* out) {
    out[0] = 2.0;
    out[1] = I;
  });
  CHECK(solve_P(op, c).sup() < 1e-15);

  std::mt19937_64 rng(11);
  for (auto [r, n] : shapes()) {
    EllipticOperator o(r, n);
    const int d = o.dim(), N = grid_n(d);
    PeriodicGrid rhs = random_grid(rng, d, N, 1.0, o.in_comps());
    PeriodicGrid back = apply_E_adjoint(o, apply_E(o, solve_P(o, rhs)));
    PeriodicGrid expect = rhs;
    for (int cc = 0; cc < rhs.ncomp; ++cc) {
      cplx mean = 0;
      for (int64_t p = 0; p < rhs.npoints(); ++p) mean += rhs.at(cc, p);
      mean /= static_cast<double>(rhs.npoints());
      for (int64_t p = 0; p < rhs.npoints(); ++p) expect.at(cc, p) -= mean;
    }
    CHECK((back - expect).sup() < 1e-10);
  }

  // E*E(g) for a zero-mean trigonometric polynomial goes back to g
  auto modes = random_modes(rng, 3, 2, 5, 4);
  for (auto& md : modes)
    if (md.k == std::vector<int>{0, 0, 0}) md.k = {1, 0, 0};
  PeriodicGrid g = synth(modes, 3, 16, 1.0, 2);
  CHECK((solve_P(op, apply_E_adjoint(op, apply_E(op, g))) - g).sup() < 1e-12);
}

TEST_CASE("ball embedding cutoff") {
  CHECK(plateau_bump(0.2, 0.5, 0.95) == 1.0);
  CHECK(plateau_bump(0.95, 0.5, 0.95) == 0.0);
  double mid = plateau_bump(0.725, 0.5, 0.95);
  CHECK(std::abs(mid - std::exp(1.0 - 1.0 / 0.75)) < 1e-15);
  PeriodicGrid one = PeriodicGrid::sample(2, 32, 1.0, 1, [](const double*, cplx* out) { out[0] = 1.0; });
  PeriodicGrid e = embed_ball(one, 1.0);
  CHECK(e.sup_in_ball(0.5) == 1.0);
  std::vector<double> x(2);
  double outside = 0;
  for (int64_t p = 0; p < e.npoints(); ++p) {
    e.point(p, x.data());
    if (std::hypot(x[0], x[1]) >= 0.95) outside = std::max(outside, std::abs(e.at(0, p)));
  }
  CHECK(outside == 0.0);
}

TEST_CASE("grid file round trip") {
  std::mt19937_64 rng(1);
  PeriodicGrid g = random_grid(rng, 2, 8, 0.75, 3);
  const std::string path = "test_elliptic_grid.bin";
  write_grid(path, g);
  PeriodicGrid h = read_grid(path);
  std::remove(path.c_str());
  CHECK(h.same_shape(g));
  CHECK(h.data == g.data);
}

TEST_CASE("bilinear form is bilinear") {
  std::mt19937_64 rng(5);
  Bilinear G = Bilinear::random(2, 2, 3, 1.0, 9);
  PeriodicGrid u1 = random_grid(rng, 3, 8, 1.0, 2), u2 = random_grid(rng, 3, 8, 1.0, 2);
  PeriodicGrid w1 = random_grid(rng, 3, 8, 1.0, 2), w2 = random_grid(rng, 3, 8, 1.0, 2);
  const cplx a(0.3, -1.2);
  PeriodicGrid lhs = G.eval_fields(u1 + a * u2, w1);
  PeriodicGrid rhs = G.eval_fields(u1, w1) + a * G.eval_fields(u2, w1);
  CHECK((lhs - rhs).sup() < 1e-11 * rhs.sup());
  lhs = G.eval_fields(u1, w1 + a * w2);
  rhs = G.eval_fields(u1, w1) + a * G.eval_fields(u1, w2);
  CHECK((lhs - rhs).sup() < 1e-11 * rhs.sup());
}

namespace {

EllipticProblem small_problem(int r, int n, double gscale, uint64_t seed) {
  EllipticProblem pb;
  pb.op = EllipticOperator(r, n);
  const int d = pb.op.dim();
  pb.gamma = Bilinear::random(pb.op.out_comps(), pb.op.in_comps(), d, gscale, seed);
  pb.H = PeriodicGrid(d, 12, 1.0, pb.op.in_comps());
  return pb;
}

PeriodicGrid smooth_data(int dim, int n, int ncomp, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto modes = random_modes(rng, dim, ncomp, 4, 2);
  return synth(modes, dim, n, 1.0, ncomp);
}

}  // namespace

TEST_CASE("contraction with zero form stops at once") {
  EllipticProblem pb = small_problem(1, 1, 0.0, 1);
  pb.gamma = Bilinear::zero(pb.op.out_comps(), pb.op.in_comps(), pb.op.dim());
  pb.H = smooth_data(3, 12, 2, 4);
  ContractionResult res = contraction_solve(pb);
  CHECK(res.iterations == 1);
  CHECK(res.V.sup() == 0.0);
}

TEST_CASE("small quadratic form contracts") {
  EllipticProblem pb = small_problem(1, 1, 0.2, 3);
  PeriodicGrid start = 0.05 * smooth_data(3, 12, 2, 8);
  ContractionResult res = contraction_solve(pb, start);
  CHECK(res.residual < 1e-9);
  REQUIRE(res.ratios.size() >= 2);
  CHECK(res.ratios[1] <= 0.5);
  CHECK(res.V.sup() < 1e-9);
}

TEST_CASE("threshold calibration and guardrail") {
  EllipticProblem pb = small_problem(0, 1, 1.0, 21);
  PeriodicGrid H0 = smooth_data(2, 12, 1, 22);
  double thr = calibrate_threshold(pb, H0, 1e-3, 1e3, 30);
  CHECK(thr > 1e-3);
  CHECK(thr < 1e3);

  pb.H = (0.5 * thr) * H0;
  ContractionResult ok = contraction_solve(pb);
  CHECK(ok.residual < pb.tol);

  pb.H = (2.0 * thr) * H0;
  bool raised = false;
  try {
    contraction_solve(pb);
  } catch (const DivergenceError& e) {
    raised = true;
    CHECK(!e.ratios().empty());
  }
  CHECK(raised);
}

TEST_CASE("fixed point does not depend on the start") {
  EllipticProblem pb = small_problem(1, 1, 1.0, 31);
  PeriodicGrid H0 = smooth_data(3, 12, 2, 32);
  double thr = calibrate_threshold(pb, H0, 1e-3, 1e3, 30);
  pb.H = (0.25 * thr) * H0;
  ContractionResult a = contraction_solve(pb, 0.01 * smooth_data(3, 12, 2, 40));
  ContractionResult b = contraction_solve(pb, 0.01 * smooth_data(3, 12, 2, 41));
  CHECK(a.V.sup() > 0.0);
  CHECK((a.V - b.V).sup() < 1e-8);
  REQUIRE(a.ratios.size() >= 2);
  bool early = false;
  for (size_t i = 0; i < std::min<size_t>(2, a.ratios.size()); ++i) early = early || a.ratios[i] <= 0.5;
  CHECK(early);
}
