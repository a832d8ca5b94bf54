#pragma once

#include <string>
#include <vector>

#include "frobflat/frames.hpp"
#include "frobflat/series.hpp"

namespace frobflat {

// Delta' = sum d^2/dt_k^2 + sum d^2/dz_j dzbar_j = sum d_t^2 + (1/4) sum d_x^2.
PowerSeries laplace_prime(const PowerSeries& f, int r, int n);
// u with Delta' u = p, built degree by degree from
// u = sum_j a_j rho^{j+1} Delta'^j p, rho = |t|^2 + 4|x|^2. Cap rises by two.
PowerSeries laplace_prime_inverse(const PowerSeries& p, int r, int n);

struct TransformedBlocks {
  SeriesMatrix B, D;   // X~ = du + B dw, L~ = dwbar + D dw, functions of (u, w)
  SeriesMap H, Hinv;   // H(t, z) = (t, z + R2), real coordinates
};

// B[E, F, R2] and D[E, F, R2] composed with H^{-1}.
TransformedBlocks transformed_blocks(const ReducedFrame& f, const std::vector<PowerSeries>& R2);

// Psi_m = (sum_k dB_{k,m}/du_k + sum_j dD_{j,m}/dw_j) o H, one series per m.
std::vector<PowerSeries> divergence_functional(const ReducedFrame& f, const std::vector<PowerSeries>& R2);

struct CorrectionConfig {
  double sigma = 0.5;      // bound on the A-norm (radius 1) of E and F
  double tol = 1e-13;      // on the largest coefficient of Psi
  int max_iter = 0;        // 0: 2 * (cap + 2)
};

struct CorrectionResult {
  int r = 0, n = 0;
  std::vector<PowerSeries> R2;
  SeriesMap H, Hinv;
  ReducedFrame transformed;          // (B, D) stored in the E, F slots
  double divergence_residual = 0.0;  // largest coefficient of Psi at the end
  double r2_norm = 0.0;              // A-norm of R2 at radius 1
  std::vector<double> trace;         // residual per iteration
};

// Solves Psi(E, F, R2) = 0 by R2 <- R2 - Delta'^{-1} Psi. R2 starts at degree 2,
// so R2(0) = 0 and dR2(0) = 0 hold by construction.
CorrectionResult quasilinear_correction(const ReducedFrame& f, const CorrectionConfig& cfg = {});

// f^#(t, x, y) = conj f(t, x, -y): the antiholomorphic reflection symmetry.
PowerSeries reflect_conj(const PowerSeries& f, int r, int n);

std::string trace_json(const CorrectionResult& c);

}  // namespace frobflat
