#include <doctest.h>

#include <cmath>
#include <random>

#include "frobflat/frames.hpp"
#include "frobflat/funcspaces.hpp"
#include "test_util.hpp"

using namespace frobflat;
using testutil::random_series;
using frobflat::max_diff;
using testutil::max_diff;

namespace {

const cplx I(0, 1);

// Slots: dt_k -> k, dz_j -> r + j, dzbar_j -> r + n + j.
VectorField unit(int r, int n, int D, int slot) { return VectorField::basis(r, n, D, slot); }

PowerSeries var(int r, int n, int D, int v, cplx s = 1.0) { return PowerSeries::variable(r + 2 * n, D, v, s); }

// Real affine field xi(x) = a + B x in the real basis.
struct Affine {
  Eigen::VectorXd a;
  Eigen::MatrixXd B;
  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return a + B * x; }
  VectorField field(int r, int n, int D) const {
    const int N = r + 2 * n;
    std::vector<PowerSeries> xi;
    for (int i = 0; i < N; ++i) {
      PowerSeries c = PowerSeries::constant(N, D, a(i));
      for (int j = 0; j < N; ++j) c += PowerSeries::variable(N, D, j, B(i, j));
      xi.push_back(c);
    }
    return from_real_basis(r, n, xi);
  }
};

Eigen::VectorXd flow(const Affine& f, Eigen::VectorXd x, double t, int steps = 4) {
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    Eigen::VectorXd k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

// d/ds d/du at 0 of phi_W^{-u} phi_V^{-s} phi_W^{u} phi_V^{s}(p)
Eigen::VectorXd flow_bracket(const Affine& V, const Affine& W, const Eigen::VectorXd& p, double h) {
  auto G = [&](double s, double u) {
    return flow(W, flow(V, flow(W, flow(V, p, s), u), -s), -u);
  };
  return (G(h, h) - G(h, -h) - G(-h, h) + G(-h, -h)) / (4 * h * h);
}

Affine random_affine(std::mt19937_64& rng, int N, double scale) {
  std::uniform_real_distribution<double> U(-1, 1);
  Affine f{Eigen::VectorXd(N), Eigen::MatrixXd(N, N)};
  for (int i = 0; i < N; ++i) {
    f.a(i) = U(rng);
    for (int j = 0; j < N; ++j) f.B(i, j) = scale * U(rng);
  }
  return f;
}

VectorField random_field(std::mt19937_64& rng, int r, int n, int D, int deg, double scale, bool zero_const) {
  VectorField v(r, n, D);
  for (auto& c : v.c) c = random_series(rng, r + 2 * n, D, deg, zero_const, scale);
  return v;
}

// Random map R^N -> R^N, identity plus small real terms of degree 2..deg.
SeriesMap near_identity(std::mt19937_64& rng, int N, int D, int deg, double scale) {
  SeriesMap m = SeriesMap::identity(N, D);
  for (int i = 0; i < N; ++i) {
    PowerSeries p = random_series(rng, N, D, deg, true, scale).real_part();
    for (int k = 0; k < p.size(); ++k)
      if (p.layout().degree(k) < 2) p.coeff_ref(k) = 0.0;
    m[i] += p;
  }
  return m;
}

}  // namespace

TEST_CASE("commutator: constant and hand-computed brackets") {
  const int D = 5;
  CHECK(max_diff(commutator(unit(1, 1, D, 0), unit(1, 1, D, 2)), VectorField(1, 1, D - 1)) == 0.0);
  VectorField tz(1, 1, D);
  tz.c[1] = var(1, 1, D, 0);
  CHECK(max_diff(commutator(unit(1, 1, D, 0), tz), unit(1, 1, D - 1, 1)) < 1e-15);
}

TEST_CASE("commutator: antisymmetric and bilinear at series level") {
  std::mt19937_64 rng(71);
  const int D = 6;
  for (int t = 0; t < 5; ++t) {
    VectorField a = random_field(rng, 1, 1, D, 3, 1.0, false), b = random_field(rng, 1, 1, D, 3, 1.0, false),
                c = random_field(rng, 1, 1, D, 3, 1.0, false);
    CHECK(max_diff(commutator(a, b), -1.0 * commutator(b, a)) < 1e-13);
    cplx s(0.3, -1.2);
    VectorField lhs = commutator(a + s * b, c);
    VectorField rhs = commutator(a, c) + s * commutator(b, c);
    CHECK(max_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("commutator: affine real pair matches the flow-bracket oracle") {
  std::mt19937_64 rng(73);
  const int r = 1, n = 1, N = 3, D = 4;
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  // sign convention fixed by [dx, x dy] = dy
  {
    Affine V{Eigen::Vector3d(0, 1, 0), Eigen::Matrix3d::Zero()};
    Affine W{Eigen::Vector3d::Zero(), Eigen::Matrix3d::Zero()};
    W.B(2, 1) = 1.0;
    Eigen::VectorXd fb = flow_bracket(V, W, Eigen::Vector3d(0.1, 0.2, 0.3), 1e-3);
    CHECK((fb - Eigen::Vector3d(0, 0, 1)).norm() < 1e-6);
  }
  for (int t = 0; t < 3; ++t) {
    Affine V = random_affine(rng, N, 0.7), W = random_affine(rng, N, 0.7);
    VectorField br = commutator(V.field(r, n, D), W.field(r, n, D));
    for (int s = 0; s < 5; ++s) {
      Eigen::VectorXd p(N);
      for (int i = 0; i < N; ++i) p(i) = U(rng);
      Eigen::VectorXd oracle = flow_bracket(V, W, p, 1e-4);
      std::vector<cplx> v = br.eval(std::vector<double>(p.data(), p.data() + N));
      Eigen::VectorXcd got = to_real_basis(r, n, Eigen::Map<Eigen::VectorXcd>(v.data(), N));
      CHECK(got.imag().norm() < 1e-14);
      CHECK((got.real() - oracle).norm() < 1e-6);
    }
  }
}

TEST_CASE("pullback: identity, scaling and push-forward round trip") {
  std::mt19937_64 rng(79);
  const int r = 1, n = 1, N = 3, D = 6;
  VectorField Z = random_field(rng, r, n, D, 4, 0.5, false);
  CHECK(max_diff(pullback(SeriesMap::identity(N, D), Z), Z) < 1e-14);

  const double gamma = 0.3;
  SeriesMap S = SeriesMap::identity(N, D);
  for (auto& c : S.comps) c *= gamma;
  VectorField dt = unit(r, n, D, 0);
  CHECK(max_diff(gamma * pullback(S, dt), dt.truncated(D - 1)) < 1e-14);

  SeriesMap Phi = near_identity(rng, N, D, 3, 0.3);
  for (int slot = 0; slot < N; ++slot) {
    VectorField du = unit(r, n, D, slot);
    VectorField pushed = pushforward(Phi, du);
    VectorField back = pullback(Phi, pushed);
    CHECK(max_diff(back, du.truncated(back.dmax())) < 1e-12);
  }
}

TEST_CASE("pullback: respects composition") {
  std::mt19937_64 rng(83);
  const int r = 0, n = 2, N = 4, D = 6;
  SeriesMap P1 = near_identity(rng, N, D, 3, 0.3), P2 = near_identity(rng, N, D, 3, 0.3);
  VectorField Z = random_field(rng, r, n, D, 3, 0.5, false);
  VectorField lhs = pullback(compose(P1, P2), Z);
  VectorField rhs = pullback(P2, pullback(P1, Z));
  CHECK(max_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("pullback: singular Jacobian at 0") {
  SeriesMap P = SeriesMap::identity(3, 4);
  P[0] = PowerSeries::monomial(3, 4, {2, 0, 0}, 1.0);
  CHECK_THROWS_AS(pullback(P, unit(1, 1, 4, 0)), SingularityError);
}

TEST_CASE("check_structure: flat models and a non-involutive pair") {
  const int D = 4;
  auto probes = ball_probes(3, 0.5, 8, 1);
  StructureReport rep = check_structure({unit(1, 1, D, 0)}, {unit(1, 1, D, 2)}, probes);
  CHECK(rep.ok());
  CHECK(rep.probes[0].rank_LX == 2);
  CHECK(rep.probes[0].rank_full == 3);
  CHECK(rep.probes[0].intersection_dim == 1);
  CHECK(rep.r == 1);
  CHECK(rep.n == 1);

  StructureReport ell = check_structure({}, {unit(0, 1, D, 1)}, ball_probes(2, 0.5, 8, 2));
  CHECK(ell.ok());
  CHECK(ell.probes[0].intersection_dim == 0);

  // L1 = dzbar1 + zbar2 dz2, L2 = dzbar2: [L1, L2] = -dz2, outside span{dzbar1, dzbar2} at 0
  VectorField L1 = unit(0, 2, D, 2), L2 = unit(0, 2, D, 3);
  L1.c[1] = var(0, 2, D, 1) - var(0, 2, D, 3, I);
  StructureReport bad = check_structure({}, {L1, L2}, {{0, 0, 0, 0}});
  CHECK(!bad.involutive);
  CHECK(bad.probes[0].commutator_residual == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("check_structure: dimension formula on random involutive structures") {
  std::mt19937_64 rng(89);
  const int r = 1, n = 1, N = 3, D = 6;
  SeriesMap Phi = near_identity(rng, N, D, 3, 0.2);
  std::vector<VectorField> X{pushforward(Phi, unit(r, n, D, 0))}, L{pushforward(Phi, unit(r, n, D, 2))};
  StructureReport rep = check_structure(X, L, ball_probes(N, 0.3, 16, 3), {1e-8, 1e-6});
  CHECK(rep.dim_formula);
  CHECK(rep.spans_tangent);
  CHECK(rep.intersection_is_X);
  CHECK(rep.constant_rank);
}

TEST_CASE("real_basis: examples and the closure precondition") {
  Eigen::MatrixXcd V(2, 2);
  V << 1.0, 1.0, I, -I;
  Eigen::MatrixXd B = real_basis(V);
  CHECK((B - Eigen::Matrix2d::Identity()).norm() < 1e-15);
  Eigen::MatrixXcd W(3, 2);
  W << 1.0, 0.0, 0.0, 1.0, 2.0, 3.0;
  Eigen::MatrixXd Wb = real_basis(W);
  CHECK((Wb - W.real()).norm() < 1e-15);
  // spans agree: rank of the union equals the rank of each
  Eigen::MatrixXcd U(2, 4);
  U << V, B.cast<cplx>();
  CHECK(numeric_rank(U) == 2);
  Eigen::MatrixXcd S(2, 1);
  S << 1.0, I;
  CHECK_THROWS_AS(real_basis(S), PreconditionError);
}

TEST_CASE("point_normalize: already normalized and scaled dzbar") {
  const int D = 4;
  std::mt19937_64 rng(97);
  VectorField X = unit(1, 1, D, 0), L = unit(1, 1, D, 2);
  L = L + random_field(rng, 1, 1, D, 3, 0.1, true);
  Normalization nm = point_normalize({X}, {L}, {0, 0, 0});
  CHECK((nm.chart.matrix - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  CHECK((nm.recombination - Eigen::Matrix2cd::Identity()).norm() < 1e-15);
  CHECK(max_diff(nm.L[0], L) < 1e-15);
  CHECK(max_diff(nm.X[0], X) < 1e-15);

  Normalization two = point_normalize({}, {2.0 * unit(0, 1, D, 1)}, {0, 0});
  CHECK((two.chart.matrix - Eigen::Matrix2d::Identity()).norm() < 1e-15);
  CHECK(std::abs(two.recombination(0, 0) - 0.5) < 1e-15);
}

TEST_CASE("point_normalize: recovers the model frame after an affine push-forward") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 4; ++t) {
    const int r = t % 2, n = 1 + t / 2, N = r + 2 * n, D = 5;
    std::vector<VectorField> X, L;
    for (int k = 0; k < r; ++k) X.push_back(unit(r, n, D, k));
    for (int j = 0; j < n; ++j) {
      VectorField l = unit(r, n, D, r + n + j);
      VectorField p = random_field(rng, r, n, D, 2, 0.1, true);
      l = l + p;
      L.push_back(l);
    }
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(N, N);
    Eigen::VectorXd z0(N);
    for (int i = 0; i < N; ++i) {
      z0(i) = 0.3 * U(rng);
      for (int j = 0; j < N; ++j) G(i, j) += 0.4 * U(rng);
    }
    // push forward by y -> z0 + G y, i.e. pull back by its inverse
    AffineChart inv{-G.inverse() * z0, G.inverse()};
    std::vector<VectorField> Xs, Ls;
    for (auto& v : X) Xs.push_back(pullback_affine(inv, v));
    for (auto& v : L) Ls.push_back(pullback_affine(inv, v));
    // mix the fields with a constant invertible matrix
    std::vector<VectorField> all(Xs.begin(), Xs.end());
    all.insert(all.end(), Ls.begin(), Ls.end());
    Eigen::MatrixXcd mix = Eigen::MatrixXcd::Identity(r + n, r + n);
    for (int i = 0; i < r + n; ++i)
      for (int j = 0; j < r + n; ++j)
        if (i != j) mix(i, j) = 0.3 * cplx(U(rng), i < r && j < r ? 0.0 : U(rng));
    std::vector<VectorField> mixed;
    for (int k = 0; k < r + n; ++k) {
      VectorField v = mix(0, k) * all[0];
      for (int i = 1; i < r + n; ++i) v = v + mix(i, k) * all[i];
      mixed.push_back(v);
    }
    std::vector<VectorField> Xm(mixed.begin(), mixed.begin() + r), Lm(mixed.begin() + r, mixed.end());
    std::vector<double> z(z0.data(), z0.data() + N);
    Normalization nm = point_normalize(Xm, Lm, z);
    for (int k = 0; k < r; ++k) {
      auto v = nm.X[k].at_zero();
      for (int i = 0; i < N; ++i) CHECK(std::abs(v[i] - (i == k ? 1.0 : 0.0)) < 1e-12);
    }
    for (int j = 0; j < n; ++j) {
      auto v = nm.L[j].at_zero();
      for (int i = 0; i < N; ++i) CHECK(std::abs(v[i] - (i == r + n + j ? 1.0 : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("reduce_to_EF: trivial, nilpotent closed form and random inverse") {
  const int r = 1, n = 1, N = 3, D = 6;
  Frame f = Frame::zero(r, n, D);
  f.B(0, 0) = var(r, n, D, 1);
  f.D(0, 0) = var(r, n, D, 2, 0.5);
  Reduction red = reduce_to_EF(f);
  CHECK((red.multiplier.at_zero() - Eigen::Matrix2cd::Identity()).norm() == 0.0);
  CHECK(red.multiplier.max_abs() == doctest::Approx(1.0));
  CHECK(red.eta0 == 1.0);
  CHECK(max_diff(red.frame.E(0, 0), f.B(0, 0)) == 0.0);

  // the dzbar block of X is t K: M^2 = 0 and (I+M)^{-1} = I - M
  Frame g = f;
  const cplx K(0.7, -0.2);
  g.E(0, 0) = var(r, n, D, 0, K);
  Reduction rg = reduce_to_EF(g);
  SeriesMatrix expect = SeriesMatrix::identity(2, N, D) - frame_M(g);
  CHECK((rg.multiplier - expect).max_abs() < 1e-15);
  PowerSeries Ehat = g.B(0, 0) - K * mul(var(r, n, D, 0), g.D(0, 0));
  CHECK(max_diff(rg.frame.E(0, 0), Ehat) < 1e-15);
  CHECK(max_diff(rg.frame.F(0, 0), g.D(0, 0)) < 1e-15);

  // a higher cap keeps the pointwise truncation error of the inverse below the rank tolerance
  std::mt19937_64 rng(103);
  const int DR = 12;
  for (int t = 0; t < 5; ++t) {
    const int rr = t % 2, nn = 1 + (t % 3 == 0), NN = rr + 2 * nn;
    Frame h = Frame::zero(rr, nn, DR);
    for (SeriesMatrix* m : {&h.A, &h.B, &h.C, &h.D, &h.E, &h.F})
      for (auto& s : m->e) s = random_series(rng, NN, DR, 3, true, 0.1);
    Reduction rh = reduce_to_EF(h);
    SeriesMatrix prod = (SeriesMatrix::identity(rr + nn, NN, DR) + frame_M(h)) * rh.multiplier;
    CHECK((prod - SeriesMatrix::identity(rr + nn, NN, DR)).max_abs() < 1e-10);
    // spans are unchanged at probes
    auto in = h.X(), inL = h.L(), out = rh.frame.X(), outL = rh.frame.L();
    in.insert(in.end(), inL.begin(), inL.end());
    out.insert(out.end(), outL.begin(), outL.end());
    for (const auto& p : ball_probes(NN, 0.25 * rh.eta0, 6, 5)) {
      Eigen::MatrixXcd a(NN, rr + nn), b(NN, 2 * (rr + nn));
      for (int k = 0; k < rr + nn; ++k) {
        auto va = in[k].eval(p), vb = out[k].eval(p);
        for (int i = 0; i < NN; ++i) {
          a(i, k) = va[i];
          b(i, k) = va[i];
          b(i, rr + nn + k) = vb[i];
        }
      }
      Eigen::JacobiSVD<Eigen::MatrixXcd> sa(a), sb(b);
      CHECK(sb.singularValues()(rr + nn) < 1e-10 * sa.singularValues()(0));
    }
  }
}

TEST_CASE("reduce_to_EF: domain shrink request carries the feasible radius") {
  const int r = 1, n = 1, D = 4;
  Frame f = Frame::zero(r, n, D);
  f.A(0, 0) = var(r, n, D, 0, -5.0);
  Reduction red = reduce_to_EF(f);
  // |1 - 5t| >= 1/2 needs |t| <= 1/10
  CHECK(red.eta0 == 0.0625);
  ReduceOptions o;
  o.require_radius = 0.5;
  try {
    reduce_to_EF(f, o);
    CHECK(false);
  } catch (const DomainShrinkError& e) {
    CHECK(e.feasible_radius() == 0.0625);
  }
  Frame g = f;
  g.A(0, 0) = PowerSeries::constant(3, D, 0.1);
  CHECK_THROWS_AS(reduce_to_EF(g), PreconditionError);
}

TEST_CASE("scale_frame: examples and the linear decay bound") {
  const int r = 1, n = 1, D = 6;
  ReducedFrame f{r, n, SeriesMatrix(1, 1, 3, D), SeriesMatrix(1, 1, 3, D)};
  f.E(0, 0) = var(r, n, D, 1) + var(r, n, D, 2, I);
  ReducedFrame g = scale_frame(f, 0.25, 1.0);
  CHECK(max_diff(g.E(0, 0), 0.25 * f.E(0, 0)) < 1e-16);
  CHECK(g.F(0, 0).is_zero());
  CHECK_THROWS_AS(scale_frame(f, 0.6, 1.0), PreconditionError);
  ReducedFrame bad = f;
  bad.F(0, 0) = PowerSeries::constant(3, D, 0.1);
  CHECK_THROWS_AS(scale_frame(bad, 0.1, 1.0), PreconditionError);

  std::mt19937_64 rng(107);
  for (int t = 0; t < 10; ++t) {
    ReducedFrame h{r, n, SeriesMatrix(1, 1, 3, D), SeriesMatrix(1, 1, 3, D)};
    h.E(0, 0) = random_series(rng, 3, D, D, true);
    h.F(0, 0) = random_series(rng, 3, D, D, true);
    const double eta0 = 0.5 + 0.5 * (t % 3);
    double prev = 1e300;
    for (double gamma : {eta0 / 2, eta0 / 4, eta0 / 8, eta0 / 16}) {
      ReducedFrame s = scale_frame(h, gamma, eta0);
      double a = anorm(s.E(0, 0), 2.0).value;
      CHECK(a <= 2 * gamma / eta0 * anorm(h.E(0, 0), eta0).value * (1 + 1e-12));
      CHECK(a / gamma <= prev * (1 + 1e-12));
      prev = a / gamma;
    }
  }
}

TEST_CASE("frame json round trip") {
  std::mt19937_64 rng(109);
  Frame f = Frame::zero(1, 1, 3);
  for (SeriesMatrix* m : {&f.A, &f.B, &f.C, &f.D, &f.E, &f.F})
    for (auto& s : m->e) s = random_series(rng, 3, 3, 3, true);
  Frame g = frame_from_json(to_json(f));
  CHECK(to_json(g) == to_json(f));
  CHECK(max_diff(g.E(0, 0), f.E(0, 0)) == 0.0);
  auto X = f.X(), L = f.L();
  Frame h = Frame::from_fields(X, L);
  CHECK((frame_M(h) - frame_M(f)).max_abs() == 0.0);
}
