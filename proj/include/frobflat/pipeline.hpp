#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "frobflat/frames.hpp"
#include "frobflat/series.hpp"

namespace frobflat {

struct FlattenConfig {
  int dmax = kDefaultDmax;
  double radius = 1.0;        // input ball; the structure check probes half of it
  uint64_t seed = 0;
  int probes = 64;
  int max_halvings = 20;
  double a_bound = 0.25;      // accepted A-norm of the matrix A at radius 1
  double trust = 1e-10;       // relative size of the top two retained degrees
  std::vector<double> zeta0;  // base point, empty for the origin
};

struct StageRecord {
  std::string stage;
  nlohmann::ordered_json info;
};

struct Chart {
  int r = 0, n = 0;
  // Phi_4: flat coordinates (u, w) on B(1) -> point-normalized coordinates.
  SeriesMap phi;
  AffineChart normalization;       // normalized -> input coordinates
  Eigen::MatrixXcd recombination;  // normalized field k = sum_i input field i * M(i, k)
  double K2 = 1.0;
  double gamma = 1.0;              // scale applied to the reduced frame
  double eta0 = 1.0, eta1 = 1.0, eta3 = 1.0;
  double det_min = 0.0, det_max = 0.0;
  std::vector<StageRecord> trace;

  int dim() const { return r + 2 * n; }
  // Phi_4 followed by the normalization: flat coordinates -> input coordinates.
  std::vector<double> to_input(const std::vector<double>& v) const;
  std::vector<VectorField> normalized_fields(const std::vector<VectorField>& X,
                                             const std::vector<VectorField>& L) const;
};

struct ProbeResidual {
  std::vector<double> point;
  double span = 0.0, relation = 0.0, commutator = 0.0, det = 0.0;
};

struct NormRow {
  std::string what;
  double s = 0.0;
  double value = 0.0;
};

struct ResidualReport {
  double span = 0.0;        // largest dw component of Phi^* X_k, Phi^* L_j
  double commutator = 0.0;  // largest bracket of the rows of K2^{-1}(I + A)[Phi^* X; Phi^* L]
  double relation = 0.0;    // [du; dwbar] - K2^{-1}(I + A)[Phi^* X; Phi^* L]
  double det_min = 0.0, det_max = 0.0;
  std::vector<ProbeResidual> probes;
  std::vector<NormRow> norms;
};

struct FlattenResult {
  Chart chart;
  SeriesMatrix A;             // (r+n) x (r+n), A(0) = 0
  double a_norm = 0.0;
  std::vector<PowerSeries> w; // first integrals in normalized coordinates, dw(0) = dz
  ResidualReport internal;    // series-level residuals on the pipeline probes
  std::string input_hash;
  int dmax = 0;
};

// point_normalize -> reduce_to_EF -> scale_frame -> quasilinear_correction ->
// complexify -> build_psi -> first_integrals -> assemble Phi_4 and A.
FlattenResult flatten(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                      const FlattenConfig& cfg = {});

// Finite-difference residuals on the given probes (flat coordinates).
ResidualReport verify_chart(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                            const FlattenResult& res, const std::vector<std::vector<double>>& probes);
// 64 scrambled points in the half-radius ball, disjoint in seed from the pipeline's own.
std::vector<std::vector<double>> verification_probes(int dim, uint64_t seed, int count = 64);

// Grid norms appended to the report: the inputs at s0 + 1 and the chart
// K2 Phi_4 at s0, s0 + 1, s0 + 2.
void add_norm_table(ResidualReport& rep, const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                    const FlattenResult& res, double radius, int grid, double s0 = 0.5);
// Zygmund norm of all coefficient functions of the fields on B(zeta0, radius).
double input_norm(const std::vector<VectorField>& X, const std::vector<VectorField>& L,
                  const std::vector<double>& zeta0, double radius, int grid, double s);
// Zygmund norm of K2 Phi_4 on B(1).
double chart_norm(const FlattenResult& res, int grid, double s);
// Grid points per axis used for a requested resolution in `dim` dimensions.
int norm_grid(int dim, int requested);

// 64-bit FNV-1a of the bytes as 16 hex digits.
std::string content_hash(const std::string& bytes);
// Hash of the fields; stored in the result and checked by verify_chart.
std::string fields_hash(const std::vector<VectorField>& X, const std::vector<VectorField>& L);

struct Gates {
  double tol = 1e-8;
  bool ok = false;
  std::vector<std::string> failed;
};
Gates check_gates(const FlattenResult& res, const ResidualReport& fd, double tol);

// ---------------------------------------------------------------- corpus

struct Instance {
  std::string label;
  double prescale = 1.0;
  int r = 0, n = 0;
  std::vector<VectorField> X, L;
};

Instance flat_instance(int r, int n, int dmax);
// L = dzbar + eps zbar dz on C.
Instance beltrami_instance(double eps, int dmax);
// Model frame pushed forward through x -> x + small quadratic and cubic terms.
Instance manufactured_instance(int r, int n, int dmax, uint64_t seed, double eps = 0.1);
// Coefficients c(x) -> c(g x) and fields multiplied by g: the pullback through x -> g x, rescaled.
Instance prescaled(const Instance& in, double g);

struct GainRow {
  std::string example;
  double prescale = 1.0;
  double gamma = 0.0;
  double K2 = 0.0;
  double input_norm = 0.0;  // s0 + 1
  double chart_norm = 0.0;  // s0 + 2, of K2 Phi_4
  double ratio = 0.0;       // chart / (1 + input)
};

struct GainConfig {
  FlattenConfig flatten;
  int grid = 32;
  double s0 = 0.5;
};

std::vector<GainRow> regularity_gain_probe(const std::vector<Instance>& family, const GainConfig& cfg);
// Every ratio within a factor of two of the median.
bool ratios_bounded(const std::vector<GainRow>& rows, double factor = 2.0);
// Beltrami eps-sweep and prescale sweeps.
std::vector<Instance> default_corpus(int dmax, uint64_t seed);

}  // namespace frobflat
