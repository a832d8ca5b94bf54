#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <utility>

// Polynomials in (z, zbar) as exponent pair -> coefficient.
namespace oracle {

using cplx = std::complex<double>;
using Poly = std::map<std::pair<int, int>, cplx>;

// Solution of (d/dzbar + F d/dz) w = 0 with w = z + O(|z|^2) and no pure
// z-monomials beyond degree one, by w_{k+1} = z - dzbar^{-1}(F dz w_k),
// truncated at total degree `degree`.
inline Poly beltrami_picard(const Poly& F, int degree) {
  Poly w{{{1, 0}, 1.0}};
  for (int it = 0; it < 4 * degree; ++it) {
    Poly next{{{1, 0}, 1.0}};
    for (const auto& [e, c] : w) {
      if (e.first == 0) continue;
      for (const auto& [f, d] : F) {
        // d z^{f1} zbar^{f2} * e1 z^{e1-1} zbar^{e2}, then integrate in zbar
        const int a = f.first + e.first - 1, b = f.second + e.second;
        if (a + b + 1 > degree) continue;
        next[{a, b + 1}] -= d * double(e.first) * c / double(b + 1);
      }
    }
    if (next == w) break;
    w = next;
  }
  return w;
}

inline Poly beltrami_picard(double eps, int degree) { return beltrami_picard(Poly{{{0, 1}, eps}}, degree); }

inline cplx eval(const Poly& p, cplx z) {
  cplx s = 0;
  for (const auto& [e, c] : p) s += c * std::pow(z, e.first) * std::pow(std::conj(z), e.second);
  return s;
}

}  // namespace oracle
