#include "frobflat/funcspaces.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

namespace frobflat {

std::string NormEstimate::space_name() const {
  switch (space) {
    case Space::Zygmund: return "zygmund";
    case Space::Holder: return "holder";
    case Space::Ck: return "ck";
    case Space::A: return "A";
    case Space::B: return "B";
  }
  return "?";
}

std::string NormEstimate::method_name() const {
  return method == Method::SeriesExact ? "series-exact" : "grid-sample";
}

std::string to_json(const NormEstimate& e) {
  nlohmann::ordered_json j;
  j["value"] = e.value;
  j["space"] = e.space_name();
  j["params"] = e.params;
  j["method"] = e.method_name();
  j["resolution"] = e.resolution;
  j["lower_bound"] = e.lower_bound;
  return j.dump();
}

// ---------------------------------------------------------------- GridField

GridField::GridField(int dim, int n, double radius, int ncomp)
    : dim_(dim), n_(n), ncomp_(ncomp), radius_(radius) {
  if (dim < 1 || ncomp < 1) throw ShapeError("grid field needs dim >= 1 and ncomp >= 1");
  if (n < 3) throw ResolutionError("grid field needs at least 3 samples per axis");
  if (!(radius > 0)) throw PreconditionError("grid radius must be positive");
  pts_ = 1;
  for (int i = 0; i < dim; ++i) pts_ *= n;
  v_.assign(static_cast<size_t>(pts_ * ncomp), cplx(0));
  build_mask();
}

void GridField::build_mask() {
  mask_.assign(static_cast<size_t>(pts_), 0);
  std::vector<double> x(dim_);
  const double lim = radius_ * radius_ * (1 + 1e-12);
  for (int64_t p = 0; p < pts_; ++p) {
    point(p, x.data());
    double r2 = 0;
    for (double xi : x) r2 += xi * xi;
    mask_[p] = r2 <= lim;
  }
}

void GridField::point(int64_t p, double* x) const {
  for (int i = 0; i < dim_; ++i) {
    x[i] = coord(static_cast<int>(p % n_));
    p /= n_;
  }
}

GridField GridField::sample(int dim, int n, double radius, int ncomp, const Fn& f) {
  GridField g(dim, n, radius, ncomp);
  std::vector<double> x(dim);
  for (int64_t p = 0; p < g.pts_; ++p) {
    g.point(p, x.data());
    f(x.data(), &g.v_[p * ncomp]);
  }
  return g;
}

GridField GridField::from_series(const PowerSeries& f, double radius, int n) {
  return sample(f.dim(), n, radius, 1, [&](const double* x, cplx* out) {
    std::vector<cplx> z(x, x + f.dim());
    out[0] = f.eval(z);
  });
}

GridField GridField::from_map(const SeriesMap& f, double radius, int n) {
  f.check();
  return sample(f.d_in(), n, radius, f.d_out(), [&](const double* x, cplx* out) {
    std::vector<cplx> z(x, x + f.d_in());
    for (int c = 0; c < f.d_out(); ++c) out[c] = f[c].eval(z);
  });
}

GridField GridField::component(int c) const {
  GridField g(dim_, n_, radius_, 1);
  for (int64_t p = 0; p < pts_; ++p) g.v_[p] = at(p, c);
  return g;
}

GridField GridField::operator+(const GridField& o) const {
  if (o.dim_ != dim_ || o.n_ != n_ || o.ncomp_ != ncomp_ || o.radius_ != radius_)
    throw ShapeError("grid fields live on different lattices");
  GridField g = *this;
  for (size_t i = 0; i < v_.size(); ++i) g.v_[i] += o.v_[i];
  return g;
}

GridField GridField::derivative(int axis) const {
  if (axis < 0 || axis >= dim_) throw ShapeError("derivative axis out of range");
  if (n_ < 5) throw ResolutionError("fourth-order derivative stencils need 5 samples per axis");
  GridField g(dim_, n_, radius_, ncomp_);
  int64_t stride = 1;
  for (int i = 0; i < axis; ++i) stride *= n_;
  const double inv = 1.0 / (12.0 * spacing());
  for (int64_t p = 0; p < pts_; ++p) {
    const int i = static_cast<int>((p / stride) % n_);
    auto f = [&](int k, int c) { return v_[(p + k * stride) * ncomp_ + c]; };
    for (int c = 0; c < ncomp_; ++c) {
      cplx d;
      if (i >= 2 && i <= n_ - 3)
        d = f(-2, c) - 8.0 * f(-1, c) + 8.0 * f(1, c) - f(2, c);
      else if (i == 0)
        d = -25.0 * f(0, c) + 48.0 * f(1, c) - 36.0 * f(2, c) + 16.0 * f(3, c) - 3.0 * f(4, c);
      else if (i == 1)
        d = -3.0 * f(-1, c) - 10.0 * f(0, c) + 18.0 * f(1, c) - 6.0 * f(2, c) + f(3, c);
      else if (i == n_ - 1)
        d = 25.0 * f(0, c) - 48.0 * f(-1, c) + 36.0 * f(-2, c) - 16.0 * f(-3, c) + 3.0 * f(-4, c);
      else
        d = 3.0 * f(1, c) + 10.0 * f(0, c) - 18.0 * f(-1, c) + 6.0 * f(-2, c) - f(-3, c);
      g.v_[p * ncomp_ + c] = d * inv;
    }
  }
  return g;
}

// ---------------------------------------------------------------- probes

namespace {

std::vector<std::vector<int>> random_dirs(int dim, const ProbeConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> U(-2, 2);
  std::vector<std::vector<int>> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < cfg.n_random_dirs && guard++ < 1000) {
    std::vector<int> v(dim);
    bool nz = false;
    for (auto& c : v) {
      c = U(rng);
      nz |= c != 0;
    }
    if (nz) out.push_back(v);
  }
  return out;
}

double lattice_len(const std::vector<int>& v) {
  double s = 0;
  for (int c : v) s += double(c) * c;
  return std::sqrt(s);
}

// Either v or -v, whichever has its first nonzero entry positive.
std::vector<int> canonical(std::vector<int> v) {
  for (int c : v) {
    if (c == 0) continue;
    if (c < 0)
      for (auto& x : v) x = -x;
    break;
  }
  return v;
}

std::vector<std::vector<int>> build_probes(int dim, int n, const ProbeConfig& cfg, double maxlen,
                                           bool dyadic_axes) {
  std::set<std::vector<int>> s;
  const int span = n - 1;
  if (dyadic_axes) {
    // h = R 2^-k along the axes, R being span/2 lattice units; k = 0 is the
    // single admissible triple through the centre
    for (int k = 0;; ++k) {
      int step = span >> (k + 1);
      if (step < 1) break;
      for (int a = 0; a < dim; ++a) {
        std::vector<int> v(dim, 0);
        v[a] = step;
        s.insert(v);
      }
    }
  } else {
    for (int step = 1; step <= span; step *= 2)
      for (int a = 0; a < dim; ++a) {
        std::vector<int> v(dim, 0);
        v[a] = step;
        s.insert(v);
      }
  }
  for (const auto& d : random_dirs(dim, cfg)) {
    for (int scale = 1;; scale *= 2) {
      std::vector<int> v = d;
      for (auto& c : v) c *= scale;
      if (lattice_len(v) > maxlen) break;
      s.insert(canonical(v));
    }
  }
  return {s.begin(), s.end()};
}

struct BallIndex {
  std::vector<int64_t> pts;
  std::vector<std::vector<int>> ic;  // integer coordinates
};

BallIndex ball_index(const GridField& f) {
  BallIndex b;
  for (int64_t p = 0; p < f.npoints(); ++p) {
    if (!f.in_ball(p)) continue;
    b.pts.push_back(p);
    std::vector<int> c(f.dim());
    int64_t q = p;
    for (int i = 0; i < f.dim(); ++i) {
      c[i] = static_cast<int>(q % f.n());
      q /= f.n();
    }
    b.ic.push_back(c);
  }
  return b;
}

double diff_norm(const GridField& f, int64_t p, int64_t q) {
  double s = 0;
  for (int c = 0; c < f.ncomp(); ++c) s += std::norm(f.at(p, c) - f.at(q, c));
  return std::sqrt(s);
}

// Offset of p+k*v on the cube, or -1 when it leaves the ball or cube.
int64_t shifted(const GridField& f, const std::vector<int>& ic, const std::vector<int>& v, int k) {
  int64_t off = 0, stride = 1;
  for (int i = 0; i < f.dim(); ++i) {
    int c = ic[i] + k * v[i];
    if (c < 0 || c >= f.n()) return -1;
    off += c * stride;
    stride *= f.n();
  }
  return f.in_ball(off) ? off : -1;
}

std::vector<GridField> derivative_family(const GridField& f, int m) {
  // all d^alpha f, |alpha| <= m, built by nondecreasing axis sequences
  std::vector<GridField> out{f};
  std::vector<std::pair<size_t, int>> frontier{{0, 0}};  // (index, last axis)
  for (int k = 1; k <= m; ++k) {
    std::vector<std::pair<size_t, int>> next;
    for (auto [idx, last] : frontier)
      for (int a = last; a < f.dim(); ++a) {
        out.push_back(out[idx].derivative(a));
        next.push_back({out.size() - 1, a});
      }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> second_difference_probes(int dim, int n, const ProbeConfig& cfg) {
  return build_probes(dim, n, cfg, (n - 1) / 2.0, true);
}

std::vector<std::vector<int>> holder_probes(int dim, int n, const ProbeConfig& cfg) {
  return build_probes(dim, n, cfg, static_cast<double>(n - 1), false);
}

double grid_sup(const GridField& f) {
  double m = 0;
  for (int64_t p = 0; p < f.npoints(); ++p) {
    if (!f.in_ball(p)) continue;
    double s = 0;
    for (int c = 0; c < f.ncomp(); ++c) s += std::norm(f.at(p, c));
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

double holder_seminorm(const GridField& f, double a, const ProbeConfig& cfg) {
  const BallIndex b = ball_index(f);
  const double h = f.spacing();
  const int64_t np = static_cast<int64_t>(b.pts.size());
  double best = 0;
  if (np * (np - 1) / 2 <= cfg.pair_budget) {
    for (int64_t i = 0; i < np; ++i)
      for (int64_t j = i + 1; j < np; ++j) {
        double d2 = 0;
        for (int k = 0; k < f.dim(); ++k) {
          double t = b.ic[i][k] - b.ic[j][k];
          d2 += t * t;
        }
        double dist = h * std::sqrt(d2);
        best = std::max(best, diff_norm(f, b.pts[i], b.pts[j]) / std::pow(dist, a));
      }
    return best;
  }
  for (const auto& v : holder_probes(f.dim(), f.n(), cfg)) {
    const double dist = h * lattice_len(v), w = 1.0 / std::pow(dist, a);
    for (int64_t i = 0; i < np; ++i) {
      int64_t q = shifted(f, b.ic[i], v, 1);
      if (q >= 0) best = std::max(best, diff_norm(f, b.pts[i], q) * w);
    }
  }
  return best;
}

double second_difference_seminorm(const GridField& f, double s, const ProbeConfig& cfg) {
  const BallIndex b = ball_index(f);
  const double h = f.spacing();
  double best = 0;
  for (const auto& v : second_difference_probes(f.dim(), f.n(), cfg)) {
    const double w = 1.0 / std::pow(h * lattice_len(v), s);
    for (size_t i = 0; i < b.pts.size(); ++i) {
      int64_t q1 = shifted(f, b.ic[i], v, 1);
      if (q1 < 0) continue;
      int64_t q2 = shifted(f, b.ic[i], v, 2);
      if (q2 < 0) continue;
      double acc = 0;
      for (int c = 0; c < f.ncomp(); ++c)
        acc += std::norm(f.at(q2, c) - 2.0 * f.at(q1, c) + f.at(b.pts[i], c));
      best = std::max(best, std::sqrt(acc) * w);
    }
  }
  return best;
}

// ---------------------------------------------------------------- norms

NormEstimate anorm(const PowerSeries& f, double radius) {
  if (!(radius > 0)) throw PreconditionError("anorm radius must be positive");
  const Layout& L = f.layout();
  std::vector<double> pw(f.dmax() + 1, 1.0);
  for (int k = 1; k <= f.dmax(); ++k) pw[k] = pw[k - 1] * radius;
  double s = 0;
  for (int i = 0; i < f.size(); ++i) s += std::abs(f.coeff(i)) * pw[L.degree(i)];
  NormEstimate e;
  e.value = s;
  e.space = Space::A;
  e.params = {double(f.dim()), radius};
  e.method = Method::SeriesExact;
  e.resolution = f.dmax();
  return e;
}

NormEstimate anorm(const SeriesMap& f, double radius) {
  f.check();
  NormEstimate best = anorm(f[0], radius);
  for (int c = 1; c < f.d_out(); ++c) best.value = std::max(best.value, anorm(f[c], radius).value);
  return best;
}

NormEstimate zygmund_estimate(const GridField& f, double s, const ProbeConfig& cfg) {
  if (!(s > 0)) throw PreconditionError("Zygmund exponent must be positive");
  const int m = static_cast<int>(std::ceil(s)) - 1;
  const double frac = s - m;
  if (m >= 1 && f.n() < 5)
    throw ResolutionError("Zygmund norm with derivatives needs at least 5 samples per axis");
  double total = 0;
  for (const auto& g : derivative_family(f, m))
    total += grid_sup(g) + holder_seminorm(g, frac / 2, cfg) + second_difference_seminorm(g, frac, cfg);
  NormEstimate e;
  e.value = total;
  e.space = Space::Zygmund;
  e.params = {s};
  e.method = Method::GridSample;
  e.resolution = f.spacing();
  e.lower_bound = true;
  return e;
}

NormEstimate holder_estimate(const GridField& f, int m, double a, const ProbeConfig& cfg) {
  if (m < 0 || a < 0 || a > 1) throw PreconditionError("Hoelder index needs m >= 0 and a in [0,1]");
  if (m >= 1 && f.n() < 5)
    throw ResolutionError("Hoelder norm with derivatives needs at least 5 samples per axis");
  double total = 0;
  for (const auto& g : derivative_family(f, m)) total += grid_sup(g) + holder_seminorm(g, a, cfg);
  NormEstimate e;
  e.value = total;
  e.space = Space::Holder;
  e.params = {double(m), a};
  e.method = Method::GridSample;
  e.resolution = f.spacing();
  e.lower_bound = true;
  return e;
}

NormEstimate ck_estimate(const GridField& f, int m) {
  if (m < 0) throw PreconditionError("C^m needs m >= 0");
  if (m >= 1 && f.n() < 5) throw ResolutionError("C^m with derivatives needs at least 5 samples per axis");
  double total = 0;
  for (const auto& g : derivative_family(f, m)) total += grid_sup(g);
  NormEstimate e;
  e.value = total;
  e.space = Space::Ck;
  e.params = {double(m)};
  e.method = Method::GridSample;
  e.resolution = f.spacing();
  e.lower_bound = true;
  return e;
}

PowerSeries scale_series(const PowerSeries& f, double gamma, double D, double eta1) {
  if (!(gamma > 0) || !(D > 0) || !(eta1 > 0) || gamma > eta1 / D * (1 + 1e-12))
    throw PreconditionError("scaling needs 0 < gamma <= eta1 / D");
  PowerSeries g = f;
  const Layout& L = f.layout();
  std::vector<double> pw(f.dmax() + 1, 1.0);
  for (int k = 1; k <= f.dmax(); ++k) pw[k] = pw[k - 1] * gamma;
  for (int i = 0; i < g.size(); ++i) g.coeff_ref(i) *= pw[L.degree(i)];
  g.prune();
  return g;
}

NormEstimate bnorm_estimate(const PowerSeries& f, double radius, const BnormConfig& cfg) {
  if (!(radius > 0)) throw PreconditionError("bnorm radius must be positive");
  const int d = f.dim();
  std::vector<cplx> z(d);
  double best = 0;
  // circles in each coordinate plane
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < cfg.circle_points; ++k) {
      std::fill(z.begin(), z.end(), cplx(0));
      z[j] = std::polar(radius, 2 * M_PI * k / cfg.circle_points);
      best = std::max(best, std::abs(f.eval(z)));
    }
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int s = 0; s < cfg.samples; ++s) {
    double nrm = 0;
    for (auto& c : z) {
      c = cplx(N(rng), N(rng));
      nrm += std::norm(c);
    }
    nrm = std::sqrt(nrm);
    for (auto& c : z) c *= radius / nrm;
    best = std::max(best, std::abs(f.eval(z)));
  }
  NormEstimate e;
  e.value = best;
  e.space = Space::B;
  e.params = {double(d), radius};
  e.method = Method::GridSample;
  e.resolution = cfg.samples;
  e.lower_bound = true;
  return e;
}

}  // namespace frobflat
