#include "frobflat/elliptic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <random>

#include <Eigen/Sparse>
#include <json.hpp>
#include <unsupported/Eigen/IterativeSolvers>

namespace frobflat {

// ---------------------------------------------------------------- grid

PeriodicGrid::PeriodicGrid(int d, int n_, double L, int nc) : dim(d), n(n_), ncomp(nc), half_width(L) {
  if (d < 1 || n_ < 2 || nc < 0 || !(L > 0)) throw ShapeError("bad periodic grid shape");
  data.assign(static_cast<size_t>(npoints()) * nc, cplx(0));
}

int64_t PeriodicGrid::npoints() const {
  int64_t p = 1;
  for (int a = 0; a < dim; ++a) p *= n;
  return p;
}

void PeriodicGrid::point(int64_t p, double* x) const {
  const double h = spacing();
  for (int a = dim - 1; a >= 0; --a) {
    x[a] = -half_width + h * static_cast<double>(p % n);
    p /= n;
  }
}

PeriodicGrid PeriodicGrid::sample(int dim, int n, double L, int ncomp, const Fn& f) {
  PeriodicGrid g(dim, n, L, ncomp);
  std::vector<double> x(dim);
  std::vector<cplx> v(ncomp);
  for (int64_t p = 0; p < g.npoints(); ++p) {
    g.point(p, x.data());
    f(x.data(), v.data());
    for (int c = 0; c < ncomp; ++c) g.at(c, p) = v[c];
  }
  return g;
}

bool PeriodicGrid::same_shape(const PeriodicGrid& o) const {
  return dim == o.dim && n == o.n && ncomp == o.ncomp && half_width == o.half_width;
}

double PeriodicGrid::sup() const {
  double m = 0;
  for (const auto& v : data) m = std::max(m, std::abs(v));
  return m;
}

double PeriodicGrid::sup_in_ball(double radius) const {
  double m = 0;
  std::vector<double> x(dim);
  for (int64_t p = 0; p < npoints(); ++p) {
    point(p, x.data());
    double r2 = 0;
    for (double xi : x) r2 += xi * xi;
    if (r2 > radius * radius) continue;
    for (int c = 0; c < ncomp; ++c) m = std::max(m, std::abs(at(c, p)));
  }
  return m;
}

PeriodicGrid& PeriodicGrid::operator+=(const PeriodicGrid& o) {
  if (!same_shape(o)) throw ShapeError("grid shapes differ");
  for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

PeriodicGrid& PeriodicGrid::operator-=(const PeriodicGrid& o) {
  if (!same_shape(o)) throw ShapeError("grid shapes differ");
  for (size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
  return *this;
}

PeriodicGrid& PeriodicGrid::operator*=(cplx s) {
  for (auto& v : data) v *= s;
  return *this;
}

PeriodicGrid operator+(PeriodicGrid a, const PeriodicGrid& b) { return a += b; }
PeriodicGrid operator-(PeriodicGrid a, const PeriodicGrid& b) { return a -= b; }
PeriodicGrid operator*(cplx s, PeriodicGrid a) { return a *= s; }

cplx inner(const PeriodicGrid& a, const PeriodicGrid& b) {
  if (!a.same_shape(b)) throw ShapeError("grid shapes differ");
  cplx s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
  return s * std::pow(a.spacing(), a.dim);
}

void write_grid(const std::string& path, const PeriodicGrid& g) {
  static_assert(std::endian::native == std::endian::little, "grid files assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  int64_t head[3] = {g.dim, g.n, g.ncomp};
  out.write(reinterpret_cast<const char*>(head), sizeof head);
  out.write(reinterpret_cast<const char*>(&g.half_width), sizeof(double));
  for (int64_t p = 0; p < g.npoints(); ++p)
    for (int c = 0; c < g.ncomp; ++c) {
      double v[2] = {g.at(c, p).real(), g.at(c, p).imag()};
      out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
}

PeriodicGrid read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  int64_t head[3];
  double L;
  in.read(reinterpret_cast<char*>(head), sizeof head);
  in.read(reinterpret_cast<char*>(&L), sizeof L);
  if (!in) throw ShapeError("truncated grid header in " + path);
  PeriodicGrid g(static_cast<int>(head[0]), static_cast<int>(head[1]), L, static_cast<int>(head[2]));
  for (int64_t p = 0; p < g.npoints(); ++p)
    for (int c = 0; c < g.ncomp; ++c) {
      double v[2];
      in.read(reinterpret_cast<char*>(v), sizeof v);
      g.at(c, p) = cplx(v[0], v[1]);
    }
  if (!in) throw ShapeError("truncated grid data in " + path);
  return g;
}

// ---------------------------------------------------------------- FFT

namespace {

struct Plans {
  fftw_plan fwd = nullptr, bwd = nullptr;
  fftw_complex* buf = nullptr;
  int64_t size = 0;
};

Plans& plans_for(int dim, int n) {
  static std::map<std::pair<int, int>, Plans> cache;
  auto it = cache.find({dim, n});
  if (it != cache.end()) return it->second;
  Plans p;
  std::vector<int> dims(dim, n);
  p.size = 1;
  for (int a = 0; a < dim; ++a) p.size *= n;
  p.buf = fftw_alloc_complex(static_cast<size_t>(p.size));
  p.fwd = fftw_plan_dft(dim, dims.data(), p.buf, p.buf, FFTW_FORWARD, FFTW_ESTIMATE);
  p.bwd = fftw_plan_dft(dim, dims.data(), p.buf, p.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  return cache.emplace(std::make_pair(dim, n), p).first->second;
}

std::mutex fft_mutex;

void fft(const PeriodicGrid& g, const cplx* in, cplx* out, bool forward) {
  std::lock_guard<std::mutex> lock(fft_mutex);
  Plans& p = plans_for(g.dim, g.n);
  std::memcpy(p.buf, in, sizeof(cplx) * p.size);
  fftw_execute(forward ? p.fwd : p.bwd);
  std::memcpy(static_cast<void*>(out), p.buf, sizeof(cplx) * p.size);
  if (!forward) {
    const double s = 1.0 / static_cast<double>(p.size);
    for (int64_t i = 0; i < p.size; ++i) out[i] *= s;
  }
}

PeriodicGrid to_fourier(const PeriodicGrid& g) {
  PeriodicGrid h = g;
  for (int c = 0; c < g.ncomp; ++c) fft(g, g.comp(c), h.comp(c), true);
  return h;
}

PeriodicGrid from_fourier(const PeriodicGrid& g) {
  PeriodicGrid h = g;
  for (int c = 0; c < g.ncomp; ++c) fft(g, g.comp(c), h.comp(c), false);
  return h;
}

// Applies a per-frequency matrix to the Fourier coefficients.
template <class Sym>
PeriodicGrid fourier_apply(const PeriodicGrid& in, int out_comps, const Sym& sym) {
  PeriodicGrid hat = to_fourier(in);
  PeriodicGrid out(in.dim, in.n, in.half_width, out_comps);
  Eigen::VectorXcd u(in.ncomp);
  for (int64_t p = 0; p < in.npoints(); ++p) {
    for (int c = 0; c < in.ncomp; ++c) u(c) = hat.at(c, p);
    Eigen::VectorXcd v = sym(wavenumbers(in, p), u);
    for (int c = 0; c < out_comps; ++c) out.at(c, p) = v(c);
  }
  return from_fourier(out);
}

}  // namespace

std::vector<double> wavenumbers(const PeriodicGrid& g, int64_t p) {
  std::vector<double> k(g.dim);
  const double base = M_PI / g.half_width;
  for (int a = g.dim - 1; a >= 0; --a) {
    int m = static_cast<int>(p % g.n);
    p /= g.n;
    int s = (2 * m < g.n) ? m : m - g.n;
    k[a] = base * s;
  }
  return k;
}

PeriodicGrid spectral_derivative(const PeriodicGrid& g, int axis) {
  if (axis < 0 || axis >= g.dim) throw ShapeError("derivative axis out of range");
  return fourier_apply(g, g.ncomp, [axis](const std::vector<double>& k, const Eigen::VectorXcd& u) {
    return Eigen::VectorXcd(cplx(0, k[axis]) * u);
  });
}

double plateau_bump(double radius, double inner, double outer) {
  if (radius <= inner) return 1.0;
  if (radius >= outer) return 0.0;
  const double s = (radius - inner) / (outer - inner);
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

PeriodicGrid embed_ball(const PeriodicGrid& g, double ball_radius) {
  const double outer = 0.95 * g.half_width;
  const double inner = 0.5 * ball_radius;
  if (!(inner < outer)) throw PreconditionError("ball does not fit the periodic box");
  PeriodicGrid h = g;
  std::vector<double> x(g.dim);
  for (int64_t p = 0; p < g.npoints(); ++p) {
    g.point(p, x.data());
    double r2 = 0;
    for (double xi : x) r2 += xi * xi;
    double b = plateau_bump(std::sqrt(r2), inner, outer);
    for (int c = 0; c < g.ncomp; ++c) h.at(c, p) *= b;
  }
  return h;
}

// ---------------------------------------------------------------- operator

EllipticOperator::EllipticOperator(int r_, int n_) : r(r_), n(n_) {
  if (r_ < 0 || n_ < 0 || r_ + n_ == 0) throw ShapeError("elliptic operator needs r + n > 0");
}

int EllipticOperator::out_comps() const { return r * (r - 1) / 2 + r * n + n * (n - 1) / 2 + 1; }

std::vector<std::string> EllipticOperator::row_names() const {
  std::vector<std::string> names;
  for (int k1 = 0; k1 < r; ++k1)
    for (int k2 = k1 + 1; k2 < r; ++k2) names.push_back("curl_t(" + std::to_string(k1 + 1) + "," + std::to_string(k2 + 1) + ")");
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < n; ++j) names.push_back("mixed(" + std::to_string(k + 1) + "," + std::to_string(j + 1) + ")");
  for (int j1 = 0; j1 < n; ++j1)
    for (int j2 = j1 + 1; j2 < n; ++j2)
      names.push_back("curl_zbar(" + std::to_string(j1 + 1) + "," + std::to_string(j2 + 1) + ")");
  names.push_back("div");
  return names;
}

Eigen::MatrixXcd EllipticOperator::symbol(const std::vector<double>& k) const {
  const cplx I(0, 1);
  auto dt = [&](int kk) { return I * k[kk]; };
  auto dzb = [&](int j) { return 0.5 * I * (k[r + j] + I * k[r + n + j]); };
  auto dz = [&](int j) { return 0.5 * I * (k[r + j] - I * k[r + n + j]); };
  Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(out_comps(), in_comps());
  int row = 0;
  for (int k1 = 0; k1 < r; ++k1)
    for (int k2 = k1 + 1; k2 < r; ++k2, ++row) {
      S(row, k1) += dt(k2);
      S(row, k2) -= dt(k1);
    }
  for (int kk = 0; kk < r; ++kk)
    for (int j = 0; j < n; ++j, ++row) {
      S(row, kk) += dzb(j);
      S(row, r + j) -= dt(kk);
    }
  for (int j1 = 0; j1 < n; ++j1)
    for (int j2 = j1 + 1; j2 < n; ++j2, ++row) {
      S(row, r + j1) += dzb(j2);
      S(row, r + j2) -= dzb(j1);
    }
  for (int kk = 0; kk < r; ++kk) S(row, kk) += dt(kk);
  for (int j = 0; j < n; ++j) S(row, r + j) += dz(j);
  return S;
}

double EllipticOperator::square_symbol(const std::vector<double>& k) const {
  double s = 0;
  for (int a = 0; a < r; ++a) s += k[a] * k[a];
  for (int a = r; a < dim(); ++a) s += 0.25 * k[a] * k[a];
  return s;
}

std::vector<PowerSeries> apply_E(const EllipticOperator& op, const std::vector<PowerSeries>& AB) {
  const int r = op.r, n = op.n;
  if (static_cast<int>(AB.size()) != op.in_comps()) throw ShapeError("apply_E expects r + n components");
  for (const auto& f : AB)
    if (f.dim() != op.dim()) throw ShapeError("apply_E input lives in the wrong dimension");
  auto dt = [&](int c, int k) { return differentiate(AB[c], k); };
  auto dzb = [&](int c, int j) { return wirtinger(AB[c], r, n, j, Wirt::dzbar); };
  auto dz = [&](int c, int j) { return wirtinger(AB[c], r, n, j, Wirt::dz); };
  std::vector<PowerSeries> out;
  for (int k1 = 0; k1 < r; ++k1)
    for (int k2 = k1 + 1; k2 < r; ++k2) out.push_back(add_lowest(dt(k1, k2), -dt(k2, k1)));
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < n; ++j) out.push_back(add_lowest(dzb(k, j), -dt(r + j, k)));
  for (int j1 = 0; j1 < n; ++j1)
    for (int j2 = j1 + 1; j2 < n; ++j2) out.push_back(add_lowest(dzb(r + j1, j2), -dzb(r + j2, j1)));
  PowerSeries div(op.dim(), AB[0].dmax() - 1);
  for (int k = 0; k < r; ++k) div = add_lowest(div, dt(k, k));
  for (int j = 0; j < n; ++j) div = add_lowest(div, dz(r + j, j));
  out.push_back(div);
  return out;
}

PeriodicGrid apply_E(const EllipticOperator& op, const PeriodicGrid& AB) {
  if (AB.ncomp != op.in_comps() || AB.dim != op.dim()) throw ShapeError("apply_E grid has the wrong shape");
  return fourier_apply(AB, op.out_comps(), [&op](const std::vector<double>& k, const Eigen::VectorXcd& u) {
    return Eigen::VectorXcd(op.symbol(k) * u);
  });
}

PeriodicGrid apply_E_adjoint(const EllipticOperator& op, const PeriodicGrid& v) {
  if (v.ncomp != op.out_comps() || v.dim != op.dim()) throw ShapeError("adjoint input has the wrong shape");
  return fourier_apply(v, op.in_comps(), [&op](const std::vector<double>& k, const Eigen::VectorXcd& u) {
    return Eigen::VectorXcd(op.symbol(k).adjoint() * u);
  });
}

PeriodicGrid solve_P(const EllipticOperator& op, const PeriodicGrid& rhs) {
  if (rhs.ncomp != op.in_comps() || rhs.dim != op.dim()) throw ShapeError("solve_P input has the wrong shape");
  return fourier_apply(rhs, rhs.ncomp, [&op](const std::vector<double>& k, const Eigen::VectorXcd& u) {
    double s = op.square_symbol(k);
    return Eigen::VectorXcd(s == 0.0 ? Eigen::VectorXcd::Zero(u.size()) : Eigen::VectorXcd(u / s));
  });
}

SymbolCertificate certify_symbol(const EllipticOperator& op, int n, double half_width) {
  PeriodicGrid g(op.dim(), n, half_width, 0);
  SymbolCertificate cert;
  cert.min_singular = HUGE_VAL;
  for (int64_t p = 1; p < g.npoints(); ++p) {
    std::vector<double> k = wavenumbers(g, p);
    Eigen::MatrixXcd S = op.symbol(k);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(S);
    cert.min_singular = std::min(cert.min_singular, svd.singularValues().minCoeff());
    Eigen::MatrixXcd d = S.adjoint() * S - op.square_symbol(k) * Eigen::MatrixXcd::Identity(S.cols(), S.cols());
    cert.max_square_defect = std::max(cert.max_square_defect, d.cwiseAbs().maxCoeff());
    ++cert.frequencies;
  }
  return cert;
}

// ---------------------------------------------------------------- bilinear

Bilinear Bilinear::zero(int m_out, int m_in, int dim) {
  Bilinear b;
  b.m_out = m_out;
  b.m_in = m_in;
  b.dim = dim;
  b.G.assign(static_cast<size_t>(m_out) * m_in * dim * m_in, cplx(0));
  return b;
}

Bilinear Bilinear::random(int m_out, int m_in, int dim, double scale, uint64_t seed) {
  Bilinear b = zero(m_out, m_in, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (auto& g : b.G) g = scale * cplx(U(rng), U(rng));
  return b;
}

PeriodicGrid gradient(const PeriodicGrid& u) {
  PeriodicGrid hat = to_fourier(u);
  PeriodicGrid g(u.dim, u.n, u.half_width, u.dim * u.ncomp);
  for (int64_t p = 0; p < u.npoints(); ++p) {
    std::vector<double> k = wavenumbers(u, p);
    for (int b = 0; b < u.dim; ++b)
      for (int c = 0; c < u.ncomp; ++c) g.at(b * u.ncomp + c, p) = cplx(0, k[b]) * hat.at(c, p);
  }
  return from_fourier(g);
}

PeriodicGrid Bilinear::eval(const PeriodicGrid& u, const PeriodicGrid& grad) const {
  if (u.ncomp != m_in || u.dim != dim || grad.ncomp != dim * m_in) throw ShapeError("bilinear form shape mismatch");
  PeriodicGrid out(u.dim, u.n, u.half_width, m_out);
  const int nd = dim * m_in;
  for (int64_t p = 0; p < u.npoints(); ++p)
    for (int o = 0; o < m_out; ++o) {
      cplx s = 0;
      for (int a = 0; a < m_in; ++a) {
        const cplx ua = u.at(a, p);
        if (ua == cplx(0)) continue;
        const cplx* g = &G[(static_cast<size_t>(o) * m_in + a) * nd];
        cplx t = 0;
        for (int q = 0; q < nd; ++q) t += g[q] * grad.at(q, p);
        s += ua * t;
      }
      out.at(o, p) = s;
    }
  return out;
}

PeriodicGrid Bilinear::eval_fields(const PeriodicGrid& u, const PeriodicGrid& w) const { return eval(u, gradient(w)); }

// ---------------------------------------------------------------- contraction

PeriodicGrid contraction_map(const EllipticProblem& pb, const PeriodicGrid& V) {
  PeriodicGrid W = pb.H + V;
  return solve_P(pb.op, apply_E_adjoint(pb.op, pb.gamma.eval_fields(W, W)));
}

}  // namespace frobflat

// Matrix-free Jacobian of V - T(V) for Eigen's GMRES.
namespace frobflat_detail {
class NewtonOp;
}

namespace Eigen::internal {
template <>
struct traits<frobflat_detail::NewtonOp> : public traits<Eigen::SparseMatrix<std::complex<double>>> {};
}  // namespace Eigen::internal

namespace frobflat_detail {

using frobflat::cplx;
using frobflat::PeriodicGrid;

class NewtonOp : public Eigen::EigenBase<NewtonOp> {
public:
  using Scalar = cplx;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  NewtonOp(const frobflat::EllipticProblem& pb, const PeriodicGrid& V)
      : pb_(pb), W_(pb.H + V), gradW_(frobflat::gradient(W_)) {}

  Eigen::Index rows() const { return static_cast<Eigen::Index>(W_.data.size()); }
  Eigen::Index cols() const { return rows(); }

  template <typename Rhs>
  Eigen::Product<NewtonOp, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<NewtonOp, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    PeriodicGrid d = W_;
    for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = x(static_cast<Eigen::Index>(i));
    PeriodicGrid g = pb_.gamma.eval(d, gradW_) + pb_.gamma.eval_fields(W_, d);
    PeriodicGrid dT = frobflat::solve_P(pb_.op, frobflat::apply_E_adjoint(pb_.op, g));
    Eigen::VectorXcd y(x.size());
    for (size_t i = 0; i < d.data.size(); ++i) y(static_cast<Eigen::Index>(i)) = d.data[i] - dT.data[i];
    return y;
  }

private:
  const frobflat::EllipticProblem& pb_;
  PeriodicGrid W_, gradW_;
};

}  // namespace frobflat_detail

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<frobflat_detail::NewtonOp, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<frobflat_detail::NewtonOp, Rhs,
                                generic_product_impl<frobflat_detail::NewtonOp, Rhs>> {
  using Scalar = typename Product<frobflat_detail::NewtonOp, Rhs>::Scalar;
  template <typename Dest>
  static void scaleAndAddTo(Dest& dst, const frobflat_detail::NewtonOp& lhs, const Rhs& rhs, const Scalar& alpha) {
    dst.noalias() += alpha * lhs.apply(rhs);
  }
};
}  // namespace Eigen::internal

namespace frobflat {

namespace {

PeriodicGrid newton_step(const EllipticProblem& pb, const PeriodicGrid& V, const PeriodicGrid& TV) {
  frobflat_detail::NewtonOp J(pb, V);
  Eigen::VectorXcd rhs(J.rows());
  for (size_t i = 0; i < V.data.size(); ++i) rhs(static_cast<Eigen::Index>(i)) = TV.data[i] - V.data[i];
  Eigen::GMRES<frobflat_detail::NewtonOp, Eigen::IdentityPreconditioner> gmres;
  gmres.setTolerance(1e-12);
  gmres.setMaxIterations(60);
  gmres.set_restart(30);
  gmres.compute(J);
  Eigen::VectorXcd delta = gmres.solve(rhs);
  PeriodicGrid out = V;
  for (size_t i = 0; i < V.data.size(); ++i) out.data[i] += delta(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace

ContractionResult contraction_solve(const EllipticProblem& pb, std::optional<PeriodicGrid> start) {
  if (pb.H.ncomp != pb.op.in_comps() || pb.H.dim != pb.op.dim()) throw ShapeError("contraction data has the wrong shape");
  if (pb.gamma.m_in != pb.op.in_comps() || pb.gamma.m_out != pb.op.out_comps() || pb.gamma.dim != pb.op.dim())
    throw ShapeError("bilinear form does not match the operator");
  ContractionResult res;
  PeriodicGrid V = start ? *start : PeriodicGrid(pb.H.dim, pb.H.n, pb.H.half_width, pb.H.ncomp);
  if (!V.same_shape(pb.H)) throw ShapeError("initial guess has the wrong shape");

  auto record = [&](double step) {
    res.steps.push_back(step);
    if (res.steps.size() >= 2) res.ratios.push_back(step / res.steps[res.steps.size() - 2]);
    ++res.iterations;
  };
  auto fail = [&](const std::string& why) {
    throw DivergenceError("contraction failed: " + why, res.ratios);
  };

  bool newton = false;
  for (int it = 0; it < pb.max_iter; ++it) {
    PeriodicGrid TV = contraction_map(pb, V);
    const double step = (TV - V).sup();
    record(step);
    if (!std::isfinite(step)) fail("non-finite iterate");
    if (step < pb.tol) {
      res.V = V;
      res.residual = step;
      res.newton_used = newton;
      return res;
    }
    if (!newton && it + 1 >= pb.plain_iters) {
      if (res.ratios.empty() || res.ratios.back() > pb.ratio_limit) fail("ratio above the contraction limit");
      newton = true;
    }
    if (newton) {
      PeriodicGrid Vn = newton_step(pb, V, TV);
      const double nstep = (contraction_map(pb, Vn) - Vn).sup();
      // Keep the plain update when the Newton step does not improve on it.
      V = (std::isfinite(nstep) && nstep < step * pb.ratio_limit) ? Vn : TV;
    } else {
      V = TV;
    }
  }
  fail("iteration cap reached");
  return res;
}

double calibrate_threshold(EllipticProblem pb, const PeriodicGrid& H0, double lo, double hi, int steps) {
  auto works = [&](double s) {
    pb.H = s * H0;
    try {
      contraction_solve(pb);
      return true;
    } catch (const DivergenceError&) {
      return false;
    }
  };
  if (!works(lo)) return 0.0;
  if (works(hi)) return hi;
  for (int i = 0; i < steps; ++i) {
    double mid = 0.5 * (lo + hi);
    (works(mid) ? lo : hi) = mid;
  }
  return lo;
}

std::string trace_json(const ContractionResult& r) {
  nlohmann::json j;
  j["iterations"] = r.iterations;
  j["steps"] = r.steps;
  j["ratios"] = r.ratios;
  j["newton_used"] = r.newton_used;
  j["residual"] = r.residual;
  return j.dump(2);
}

}  // namespace frobflat
