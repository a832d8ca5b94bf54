#include <doctest.h>

#include <map>
#include <random>

#include "frobflat/series.hpp"
#include "test_util.hpp"

using namespace frobflat;
using testutil::max_diff;
using testutil::random_series;

namespace {

PowerSeries poly1(int dmax, std::vector<cplx> c) {
  PowerSeries f(1, dmax);
  for (size_t k = 0; k < c.size() && static_cast<int>(k) <= dmax; ++k) f.set({static_cast<int>(k)}, c[k]);
  return f;
}

}  // namespace

TEST_CASE("mul: exact small products") {
  PowerSeries a = poly1(2, {1, 1}), b = poly1(2, {1, -1});
  PowerSeries p = mul(a, b);
  CHECK(max_diff(p, poly1(2, {1, 0, -1})) == 0.0);
  PowerSeries one = PowerSeries::constant(1, 2, 1.0);
  CHECK(max_diff(mul(a, one), a) == 0.0);
}

TEST_CASE("mul: random pair matches brute-force convolution") {
  std::mt19937_64 rng(11);
  const int D = 8;
  PowerSeries f = random_series(rng, 2, D, 4), g = random_series(rng, 2, D, 4);
  // oracle: map of exponent pairs
  std::map<std::pair<int, int>, cplx> acc;
  for (int a1 = 0; a1 <= 4; ++a1)
    for (int a2 = 0; a1 + a2 <= 4; ++a2)
      for (int b1 = 0; b1 <= 4; ++b1)
        for (int b2 = 0; b1 + b2 <= 4; ++b2)
          acc[{a1 + b1, a2 + b2}] += f.coeff({a1, a2}) * g.coeff({b1, b2});
  PowerSeries h = mul(f, g);
  double err = 0;
  for (auto& [k, v] : acc) err = std::max(err, std::abs(h.coeff({k.first, k.second}) - v));
  CHECK(err < 1e-13);
}

TEST_CASE("mul: shape mismatch and dropped-term diagnostic") {
  PowerSeries a(2, 3), b(2, 4), c(3, 3);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, c), ShapeError);
  PowerSeries t = poly1(2, {0, 1, 3});
  double dropped = -1;
  mul(t, t, &dropped);
  // (t + 3t^2)^2 = t^2 + 6t^3 + 9t^4, cap 2 drops 6 and 9
  CHECK(dropped == doctest::Approx(9.0));
}

TEST_CASE("compose: hand expansions") {
  PowerSeries f = poly1(4, {0, 0, 1});
  SeriesMap g({poly1(4, {0, 1, 1})});
  CHECK(max_diff(compose(f, g), poly1(4, {0, 0, 1, 2, 1})) < 1e-15);
  std::mt19937_64 rng(3);
  PowerSeries h = random_series(rng, 3, 6, 6);
  CHECK(max_diff(compose(h, SeriesMap::identity(3, 6)), h) < 1e-14);
}

TEST_CASE("compose: random cubic in one variable matches term-by-term expansion") {
  std::mt19937_64 rng(5);
  const int D = 9;
  PowerSeries f = random_series(rng, 1, D, 3);
  PowerSeries g = random_series(rng, 1, D, 3, true);
  // expand sum_k f_k g^k with plain vectors
  std::vector<cplx> gc(4), pw(D + 1, 0.0), out(D + 1, 0.0);
  for (int k = 0; k <= 3; ++k) gc[k] = g.coeff({k});
  pw[0] = 1.0;
  for (int k = 0; k <= 3; ++k) {
    for (int m = 0; m <= D; ++m) out[m] += f.coeff({k}) * pw[m];
    std::vector<cplx> nxt(D + 1, 0.0);
    for (int a = 0; a <= D; ++a)
      for (int b = 0; b <= 3 && a + b <= D; ++b) nxt[a + b] += pw[a] * gc[b];
    pw = nxt;
  }
  PowerSeries h = compose(f, SeriesMap({g}));
  double err = 0;
  for (int m = 0; m <= D; ++m) err = std::max(err, std::abs(h.coeff({m}) - out[m]));
  CHECK(err < 1e-13);
}

TEST_CASE("compose: non-centred inner map needs the recenter flag") {
  PowerSeries f = poly1(3, {0, 0, 1});
  SeriesMap g({poly1(3, {1, 1})});
  CHECK_THROWS_AS(compose(f, g), PreconditionError);
  ComposeOptions o;
  o.recenter = true;
  CHECK(max_diff(compose(f, g, o), poly1(3, {1, 2, 1})) < 1e-15);
}

TEST_CASE("invert_map: closed forms and singular input") {
  SeriesMap H({poly1(4, {0, 1, 1})});
  SeriesMap K = invert_map(H);
  CHECK(max_diff(K[0], poly1(4, {0, 1, -1, 2, -5})) < 1e-13);
  SeriesMap C = SeriesMap::identity(2, 5);
  for (auto& c : C.comps) c *= 3.0;
  SeriesMap Ci = invert_map(C);
  for (int i = 0; i < 2; ++i) CHECK(max_diff(Ci[i], PowerSeries::variable(2, 5, i, 1.0 / 3.0)) < 1e-15);
  SeriesMap Z({poly1(4, {0, 0, 1})});
  try {
    invert_map(Z);
    CHECK(false);
  } catch (const SingularityError& e) {
    CHECK(e.singular_value() == 0.0);
  }
}

TEST_CASE("invert_map: compose(K,H) = id on random maps") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + trial % 3, D = 7;
    SeriesMap H;
    for (int i = 0; i < d; ++i) {
      PowerSeries c = random_series(rng, d, D, D, true, 0.3);
      int lin = c.layout().raise(i, 0);
      c.coeff_ref(lin) += 1.0;
      H.comps.push_back(c);
    }
    SeriesMap K = invert_map(H);
    SeriesMap KH = compose(K, H);
    double scale = 0;
    for (auto& c : K.comps) scale = std::max(scale, c.max_abs());
    for (int i = 0; i < d; ++i)
      CHECK(max_diff(KH[i], PowerSeries::variable(d, D, i)) < 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("differentiate: basics and commuting partials") {
  PowerSeries t2 = poly1(4, {0, 0, 1});
  PowerSeries d = differentiate(t2, 0);
  CHECK(d.dmax() == 3);
  CHECK(max_diff(d, poly1(3, {0, 2})) == 0.0);
  CHECK(differentiate(PowerSeries::constant(1, 4, 5.0), 0).is_zero());
  // integer coefficients keep every product exact in floating point
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> U(-50, 50);
  PowerSeries f(3, 8);
  for (int i = 0; i < f.size(); ++i) f.coeff_ref(i) = cplx(U(rng), U(rng));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(max_diff(differentiate(differentiate(f, i), j), differentiate(differentiate(f, j), i)) == 0.0);
  CHECK_THROWS_AS(differentiate(f, 3), ShapeError);
}

TEST_CASE("wirtinger: coordinate identities") {
  const int D = 6;
  PowerSeries z = PowerSeries::variable(2, D, 0) + PowerSeries::variable(2, D, 1, cplx(0, 1));
  PowerSeries zb = z.conj_coeffs();
  CHECK(wirtinger(z, 0, 1, 0, Wirt::dzbar).is_zero(1e-15));
  CHECK(max_diff(wirtinger(z, 0, 1, 0, Wirt::dz), PowerSeries::constant(2, D - 1, 1.0)) < 1e-15);
  PowerSeries zk = PowerSeries::constant(2, D, 1.0), zbk = zk;
  for (int k = 1; k <= 5; ++k) {
    zk = mul(zk, z);
    zbk = mul(zbk, zb);
    CHECK(wirtinger(zk, 0, 1, 0, Wirt::dzbar).is_zero(1e-13));
    CHECK(wirtinger(zbk, 0, 1, 0, Wirt::dz).is_zero(1e-13));
  }
  PowerSeries r2 = PowerSeries::monomial(2, D, {2, 0}, 1.0) + PowerSeries::monomial(2, D, {0, 2}, 1.0);
  PowerSeries lap = wirtinger(wirtinger(r2, 0, 1, 0, Wirt::dzbar), 0, 1, 0, Wirt::dz);
  CHECK(std::abs(lap.at_zero() - 1.0) < 1e-15);
  CHECK_THROWS_AS(wirtinger(r2, 0, 1, 1, Wirt::dz), ShapeError);
}

TEST_CASE("wirtinger: finite-difference oracle for the mixed second derivative") {
  std::mt19937_64 rng(9);
  PowerSeries f = random_series(rng, 2, 6, 5);
  PowerSeries g = wirtinger(wirtinger(f, 0, 1, 0, Wirt::dzbar), 0, 1, 0, Wirt::dz);
  // d_z d_zbar = (1/4) Laplacian
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  const double h = 1e-3;
  for (int s = 0; s < 5; ++s) {
    double x = U(rng), y = U(rng);
    auto F = [&](double a, double b) { return f.eval(std::vector<cplx>{a, b}); };
    cplx lap = (F(x + h, y) + F(x - h, y) + F(x, y + h) + F(x, y - h) - 4.0 * F(x, y)) / (h * h);
    CHECK(std::abs(0.25 * lap - g.eval(std::vector<cplx>{x, y})) < 1e-5);
  }
}

TEST_CASE("json: bit-exact round trip in graded order") {
  std::mt19937_64 rng(23);
  PowerSeries f = random_series(rng, 3, 5, 5);
  std::string s = to_json(f);
  PowerSeries g = series_from_json(s);
  CHECK(g.dim() == 3);
  CHECK(g.dmax() == 5);
  for (int i = 0; i < f.size(); ++i) CHECK(f.coeff(i) == g.coeff(i));
  CHECK(to_json(g) == s);
  PowerSeries m = PowerSeries::monomial(2, 2, {0, 1}, 1.0) + PowerSeries::monomial(2, 2, {1, 0}, 2.0);
  CHECK(to_json(m) == R"({"dim":2,"dmax":2,"terms":[{"alpha":[1,0],"im":0.0,"re":2.0},{"alpha":[0,1],"im":0.0,"re":1.0}]})");
}

TEST_CASE("prune: tiny coefficients are dropped") {
  PowerSeries a = PowerSeries::constant(1, 2, 1e-15);
  CHECK(a.is_zero());
  PowerSeries b = poly1(2, {1.0, 1e-8});
  PowerSeries c = mul(b, PowerSeries::constant(1, 2, 1e-7));
  CHECK(c.coeff({1}) == 0.0);
  CHECK(c.coeff({0}) != 0.0);
}
