#include "frobflat/series.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Dense>
#include "frobflat/json_io.hpp"

namespace frobflat {

namespace {

void enumerate_degree(int dim, int k, std::vector<int>& cur, int pos, std::vector<int>& out) {
  if (pos == dim - 1) {
    cur[pos] = k;
    out.insert(out.end(), cur.begin(), cur.end());
    return;
  }
  for (int a = k; a >= 0; --a) {
    cur[pos] = a;
    enumerate_degree(dim, k - a, cur, pos + 1, out);
  }
}

}  // namespace

Layout::Layout(int dim, int dmax) : dim_(dim), dmax_(dmax) {
  if (dim < 0 || dmax < 0) throw ShapeError("layout needs dim >= 0 and dmax >= 0");
  dstart_.assign(dmax + 2, 0);
  if (dim == 0) {
    degree_.push_back(0);
    dstart_[0] = 0;
    for (int k = 1; k <= dmax + 1; ++k) dstart_[k] = 1;
  } else {
    std::vector<int> cur(dim, 0);
    for (int k = 0; k <= dmax; ++k) {
      dstart_[k] = static_cast<int>(exps_.size() / dim);
      enumerate_degree(dim, k, cur, 0, exps_);
    }
    dstart_[dmax + 1] = static_cast<int>(exps_.size() / dim);
    int n = dstart_[dmax + 1];
    degree_.resize(n);
    for (int k = 0; k <= dmax; ++k)
      for (int i = dstart_[k]; i < dstart_[k + 1]; ++i) degree_[i] = k;
  }
  const int n = size();
  lookup_.reserve(n);
  for (int i = 0; i < n; ++i) lookup_.emplace_back(dim ? key(exponents(i)) : 0, i);
  std::sort(lookup_.begin(), lookup_.end());

  lower_.assign(static_cast<size_t>(dim) * n, -1);
  raise_.assign(static_cast<size_t>(dim) * n, -1);
  parent_.assign(n, -1);
  pvar_.assign(n, -1);
  std::vector<int> a(dim);
  for (int i = 0; i < n; ++i) {
    const int* e = exponents(i);
    for (int v = 0; v < dim; ++v) {
      a.assign(e, e + dim);
      if (a[v] > 0) {
        a[v] -= 1;
        lower_[static_cast<size_t>(v) * n + i] = index_of(a.data());
        a[v] += 1;
      }
      if (degree_[i] < dmax) {
        a[v] += 1;
        raise_[static_cast<size_t>(v) * n + i] = index_of(a.data());
      }
    }
    for (int v = 0; v < dim; ++v)
      if (e[v] > 0) {
        parent_[i] = lower(v, i);
        pvar_[i] = v;
        break;
      }
  }
  sum_off_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) sum_off_[i + 1] = sum_off_[i] + prefix(dmax - degree_[i]);
  sum_.resize(sum_off_[n]);
  for (int i = 0; i < n; ++i) {
    const int* ei = exponents(i);
    int lim = prefix(dmax - degree_[i]);
    for (int j = 0; j < lim; ++j) {
      const int* ej = exponents(j);
      for (int v = 0; v < dim; ++v) a[v] = ei[v] + ej[v];
      sum_[sum_off_[i] + j] = index_of(a.data());
    }
  }
}

uint64_t Layout::key(const int* alpha) const {
  uint64_t k = 0;
  for (int v = 0; v < dim_; ++v) k = k * static_cast<uint64_t>(dmax_ + 1) + static_cast<uint64_t>(alpha[v]);
  return k;
}

int Layout::prefix(int k) const {
  if (k < 0) return 0;
  if (k > dmax_) k = dmax_;
  return dstart_[k + 1];
}

int Layout::index_of(const int* alpha) const {
  int deg = 0;
  for (int v = 0; v < dim_; ++v) {
    if (alpha[v] < 0) return -1;
    deg += alpha[v];
  }
  if (deg > dmax_) return -1;
  if (dim_ == 0) return 0;
  uint64_t k = key(alpha);
  auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(k, -1));
  if (it == lookup_.end() || it->first != k) return -1;
  return it->second;
}

std::shared_ptr<const Layout> Layout::get(int dim, int dmax) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const Layout>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{dim, dmax}];
  if (!slot) slot = std::shared_ptr<const Layout>(new Layout(dim, dmax));
  return slot;
}

// ---------------------------------------------------------------------------

PowerSeries::PowerSeries(int dim, int dmax) : layout_(Layout::get(dim, dmax)) {
  c_.assign(layout_->size(), cplx(0));
}

PowerSeries PowerSeries::constant(int dim, int dmax, cplx c) {
  PowerSeries f(dim, dmax);
  f.c_[0] = c;
  f.prune();
  return f;
}

PowerSeries PowerSeries::variable(int dim, int dmax, int var, cplx scale) {
  if (var < 0 || var >= dim) throw ShapeError("variable index out of range");
  PowerSeries f(dim, dmax);
  if (dmax >= 1) f.c_[f.layout_->raise(var, 0)] = scale;
  f.prune();
  return f;
}

PowerSeries PowerSeries::monomial(int dim, int dmax, const MultiIndex& alpha, cplx c) {
  PowerSeries f(dim, dmax);
  f.set(alpha, c);
  return f;
}

cplx PowerSeries::coeff(const MultiIndex& alpha) const {
  if (static_cast<int>(alpha.size()) != dim()) throw ShapeError("multi-index length mismatch");
  int i = layout_->index_of(alpha.data());
  return i < 0 ? cplx(0) : c_[i];
}

void PowerSeries::set(const MultiIndex& alpha, cplx v) {
  if (static_cast<int>(alpha.size()) != dim()) throw ShapeError("multi-index length mismatch");
  int i = layout_->index_of(alpha.data());
  if (i < 0) throw ShapeError("multi-index exceeds degree cap");
  c_[i] = std::abs(v) < kPruneThreshold ? cplx(0) : v;
}

cplx PowerSeries::eval(const cplx* x) const {
  const int n = size();
  if (n == 0) return 0;
  std::vector<cplx> mono(n);
  mono[0] = 1.0;
  cplx acc = c_[0];
  for (int i = 1; i < n; ++i) {
    mono[i] = mono[layout_->parent(i)] * x[layout_->pvar(i)];
    acc += c_[i] * mono[i];
  }
  return acc;
}

double PowerSeries::eval_real(const std::vector<double>& x) const {
  std::vector<cplx> z(x.begin(), x.end());
  return eval(z.data()).real();
}

PowerSeries PowerSeries::truncated(int new_dmax) const {
  if (new_dmax >= dmax()) return *this;
  if (new_dmax < 0) new_dmax = 0;
  PowerSeries f(dim(), new_dmax);
  std::copy(c_.begin(), c_.begin() + f.size(), f.c_.begin());
  return f;
}

PowerSeries PowerSeries::padded(int new_dmax) const {
  if (new_dmax <= dmax()) return truncated(new_dmax);
  PowerSeries f(dim(), new_dmax);
  std::copy(c_.begin(), c_.end(), f.c_.begin());
  return f;
}

PowerSeries PowerSeries::conj_coeffs() const {
  PowerSeries f = *this;
  for (auto& v : f.c_) v = std::conj(v);
  return f;
}

PowerSeries PowerSeries::real_part() const {
  PowerSeries f = *this;
  for (auto& v : f.c_) v = v.real();
  f.prune();
  return f;
}

PowerSeries PowerSeries::imag_part() const {
  PowerSeries f = *this;
  for (auto& v : f.c_) v = v.imag();
  f.prune();
  return f;
}

PowerSeries PowerSeries::homogeneous_part(int k) const {
  PowerSeries f(dim(), dmax());
  for (int i = layout_->prefix(k - 1); i < layout_->prefix(k); ++i) f.c_[i] = c_[i];
  if (k > dmax()) f.c_.assign(f.c_.size(), 0.0);
  return f;
}

int PowerSeries::max_degree() const {
  for (int i = size() - 1; i >= 0; --i)
    if (c_[i] != cplx(0)) return layout_->degree(i);
  return -1;
}

bool PowerSeries::is_zero(double tol) const {
  for (const auto& v : c_)
    if (std::abs(v) > tol) return false;
  return true;
}

double PowerSeries::max_abs() const {
  double m = 0;
  for (const auto& v : c_) m = std::max(m, std::abs(v));
  return m;
}

void PowerSeries::prune(double thr) {
  for (auto& v : c_)
    if (std::abs(v) < thr) v = 0.0;
}

static void check_same(const PowerSeries& a, const PowerSeries& b) {
  if (!a.valid() || !b.valid()) throw ShapeError("uninitialised series");
  if (a.dim() != b.dim() || a.dmax() != b.dmax())
    throw ShapeError("series shape mismatch: (" + std::to_string(a.dim()) + "," +
                     std::to_string(a.dmax()) + ") vs (" + std::to_string(b.dim()) + "," +
                     std::to_string(b.dmax()) + ")");
}

PowerSeries& PowerSeries::operator+=(const PowerSeries& o) {
  check_same(*this, o);
  for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  prune();
  return *this;
}

PowerSeries& PowerSeries::operator-=(const PowerSeries& o) {
  check_same(*this, o);
  for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  prune();
  return *this;
}

PowerSeries& PowerSeries::operator*=(cplx s) {
  for (auto& v : c_) v *= s;
  prune();
  return *this;
}

PowerSeries operator+(PowerSeries a, const PowerSeries& b) { return a += b; }
PowerSeries operator-(PowerSeries a, const PowerSeries& b) { return a -= b; }
PowerSeries operator-(PowerSeries a) { return a *= -1.0; }
PowerSeries operator*(PowerSeries a, cplx s) { return a *= s; }
PowerSeries operator*(cplx s, PowerSeries a) { return a *= s; }
PowerSeries operator*(const PowerSeries& a, const PowerSeries& b) { return mul(a, b); }

static void mul_into(const PowerSeries& f, const PowerSeries& g, std::vector<cplx>& out) {
  const Layout& L = f.layout();
  const int n = L.size();
  const auto& fc = f.coeffs();
  const auto& gc = g.coeffs();
  for (int i = 0; i < n; ++i) {
    const cplx a = fc[i];
    if (a == cplx(0)) continue;
    const int lim = L.prefix(L.dmax() - L.degree(i));
    for (int j = 0; j < lim; ++j) {
      const cplx b = gc[j];
      if (b == cplx(0)) continue;
      out[L.sum_index(i, j)] += a * b;
    }
  }
}

PowerSeries mul(const PowerSeries& f, const PowerSeries& g) {
  check_same(f, g);
  PowerSeries h(f.dim(), f.dmax());
  mul_into(f, g, h.coeffs());
  h.prune();
  return h;
}

PowerSeries mul(const PowerSeries& f, const PowerSeries& g, double* dropped) {
  PowerSeries h = mul(f, g);
  if (dropped) {
    int top = std::max(0, f.max_degree()) + std::max(0, g.max_degree());
    double m = 0;
    if (top > f.dmax()) {
      PowerSeries F = f.padded(top), G = g.padded(top);
      PowerSeries full = mul(F, G);
      const Layout& L = full.layout();
      for (int i = L.prefix(f.dmax()); i < full.size(); ++i) m = std::max(m, std::abs(full.coeff(i)));
    }
    *dropped = m;
  }
  return h;
}

PowerSeries mul_lowest(const PowerSeries& f, const PowerSeries& g) {
  int c = std::min(f.dmax(), g.dmax());
  return mul(f.truncated(c), g.truncated(c));
}

PowerSeries add_lowest(const PowerSeries& f, const PowerSeries& g) {
  int c = std::min(f.dmax(), g.dmax());
  return f.truncated(c) + g.truncated(c);
}

// ---------------------------------------------------------------------------

SeriesMap::SeriesMap(std::vector<PowerSeries> c) : comps(std::move(c)) { check(); }

SeriesMap SeriesMap::identity(int dim, int dmax) {
  SeriesMap m;
  for (int i = 0; i < dim; ++i) m.comps.push_back(PowerSeries::variable(dim, dmax, i));
  return m;
}

SeriesMap SeriesMap::zero(int d_in, int d_out, int dmax) {
  SeriesMap m;
  for (int i = 0; i < d_out; ++i) m.comps.emplace_back(d_in, dmax);
  return m;
}

int SeriesMap::dmax() const {
  if (comps.empty()) return -1;
  return comps[0].dmax();
}

void SeriesMap::check() const {
  for (const auto& c : comps)
    if (c.dim() != comps[0].dim() || c.dmax() != comps[0].dmax())
      throw ShapeError("series map components must share dimension and cap");
}

std::vector<cplx> SeriesMap::eval(const std::vector<cplx>& x) const {
  std::vector<cplx> y;
  y.reserve(comps.size());
  for (const auto& c : comps) y.push_back(c.eval(x));
  return y;
}

std::vector<double> SeriesMap::eval_real(const std::vector<double>& x) const {
  std::vector<cplx> z(x.begin(), x.end());
  std::vector<double> y;
  for (const auto& c : comps) y.push_back(c.eval(z).real());
  return y;
}

SeriesMap SeriesMap::truncated(int new_dmax) const {
  SeriesMap m;
  for (const auto& c : comps) m.comps.push_back(c.truncated(new_dmax));
  return m;
}

// ---------------------------------------------------------------------------

std::vector<PowerSeries> compose_many(const std::vector<const PowerSeries*>& fs,
                                      const SeriesMap& g, ComposeOptions opt) {
  if (fs.empty()) return {};
  g.check();
  const int dout = g.d_out();
  const int din = g.d_in();
  int df = fs[0]->dmax();
  for (auto* f : fs) {
    if (f->dim() != dout) throw ShapeError("compose: inner map output dimension must equal outer dimension");
    if (f->dmax() != df) throw ShapeError("compose: outer series caps differ");
  }
  bool centered = true;
  for (const auto& c : g.comps)
    if (std::abs(c.at_zero()) > 0) centered = false;
  if (!centered && !opt.recenter)
    throw PreconditionError("compose: inner map has a non-zero constant term; pass recenter to allow");
  const int dg = g.dmax();
  const int dr = centered ? std::min(df, dg) : dg;
  std::vector<PowerSeries> inner;
  for (const auto& c : g.comps) inner.push_back(c.truncated(dr));

  if (dout == 0) {
    std::vector<PowerSeries> out;
    for (auto* f : fs) out.push_back(PowerSeries::constant(din, dr, f->at_zero()));
    return out;
  }
  auto layout = Layout::get(dout, df);
  const Layout& L = *layout;
  const int nf = L.size();
  // Highest monomial degree that can contribute.
  const int top = centered ? dr : df;
  const int nuse = L.prefix(top);
  std::vector<PowerSeries> pw(nuse);
  pw[0] = PowerSeries::constant(din, dr, 1.0);
  // Only build monomials that some f actually uses, plus their ancestors.
  std::vector<char> need(nuse, 0);
  for (auto* f : fs)
    for (int i = 0; i < nuse; ++i)
      if (f->coeff(i) != cplx(0)) need[i] = 1;
  for (int i = nuse - 1; i > 0; --i)
    if (need[i]) need[L.parent(i)] = 1;
  for (int i = 1; i < nuse; ++i) {
    if (!need[i]) continue;
    pw[i] = mul(pw[L.parent(i)], inner[L.pvar(i)]);
  }
  (void)nf;
  std::vector<PowerSeries> out;
  for (auto* f : fs) {
    PowerSeries h(din, dr);
    auto& hc = h.coeffs();
    for (int i = 0; i < nuse; ++i) {
      const cplx a = f->coeff(i);
      if (a == cplx(0)) continue;
      const auto& pc = pw[i].coeffs();
      for (size_t k = 0; k < hc.size(); ++k) hc[k] += a * pc[k];
    }
    h.prune();
    out.push_back(std::move(h));
  }
  return out;
}

PowerSeries compose(const PowerSeries& f, const SeriesMap& g, ComposeOptions opt) {
  return compose_many({&f}, g, opt)[0];
}

SeriesMap compose(const SeriesMap& f, const SeriesMap& g, ComposeOptions opt) {
  std::vector<const PowerSeries*> ps;
  for (const auto& c : f.comps) ps.push_back(&c);
  return SeriesMap(compose_many(ps, g, opt));
}

std::vector<cplx> linear_part(const SeriesMap& H) {
  const int dout = H.d_out(), din = H.d_in();
  std::vector<cplx> L(static_cast<size_t>(dout) * din, 0.0);
  for (int i = 0; i < dout; ++i) {
    if (H[i].dmax() < 1) continue;
    for (int j = 0; j < din; ++j) L[static_cast<size_t>(i) * din + j] = H[i].coeff(H[i].layout().raise(j, 0));
  }
  return L;
}

SeriesMap invert_map(const SeriesMap& H, InvertOptions opt) {
  H.check();
  const int d = H.d_out();
  if (H.d_in() != d) throw ShapeError("invert_map: map must be square");
  for (const auto& c : H.comps)
    if (std::abs(c.at_zero()) > 1e-12) throw PreconditionError("invert_map: H(0) must vanish");
  const int D = H.dmax();
  auto Lv = linear_part(H);
  Eigen::MatrixXcd L(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) L(i, j) = Lv[static_cast<size_t>(i) * d + j];
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(L);
  double smin = d ? svd.singularValues()(d - 1) : 1.0;
  if (smin < opt.sigma_min)
    throw SingularityError("invert_map: linear part is singular (smallest singular value " +
                               std::to_string(smin) + ")",
                           smin);
  Eigen::MatrixXcd Li = L.inverse();
  // Nonlinear remainder N = H - L x.
  SeriesMap N = H;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      int idx = N[i].layout().raise(j, 0);
      if (idx >= 0) N[i].coeff_ref(idx) = 0.0;
    }
  SeriesMap id = SeriesMap::identity(d, D);
  auto apply_Li = [&](const SeriesMap& v) {
    SeriesMap out = SeriesMap::zero(d, d, D);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (Li(i, j) != cplx(0)) out[i] += v[j] * Li(i, j);
    return out;
  };
  SeriesMap K = apply_Li(id);
  for (int it = 1; it < D; ++it) {
    SeriesMap NK = compose(N, K);
    SeriesMap rhs = id;
    for (int i = 0; i < d; ++i) rhs[i] -= NK[i];
    K = apply_Li(rhs);
  }
  return K;
}

PowerSeries differentiate(const PowerSeries& f, int var) {
  if (var < 0 || var >= f.dim()) throw ShapeError("differentiate: variable index out of range");
  const int D = f.dmax();
  PowerSeries h(f.dim(), std::max(0, D - 1));
  if (D == 0) return h;
  const Layout& L = f.layout();
  for (int i = 0; i < f.size(); ++i) {
    const cplx a = f.coeff(i);
    if (a == cplx(0)) continue;
    int lo = L.lower(var, i);
    if (lo < 0) continue;
    h.coeff_ref(lo) += a * static_cast<double>(L.exponents(i)[var]);
  }
  h.prune();
  return h;
}

PowerSeries wirtinger(const PowerSeries& f, int r, int n, int j, Wirt kind) {
  if (f.dim() != r + 2 * n) throw ShapeError("wirtinger: dimension must be r+2n");
  if (j < 0 || j >= n) throw ShapeError("wirtinger: index out of range");
  PowerSeries a = differentiate(f, r + j);
  PowerSeries b = differentiate(f, r + j + n);
  const cplx s = kind == Wirt::dz ? cplx(0, -1) : cplx(0, 1);
  return (a + b * s) * 0.5;
}

PowerSeries shift_up(const PowerSeries& f, int var, int power, int new_dmax) {
  PowerSeries h(f.dim(), new_dmax);
  const Layout& L = f.layout();
  const Layout& H = h.layout();
  std::vector<int> a(f.dim());
  for (int i = 0; i < f.size(); ++i) {
    if (f.coeff(i) == cplx(0)) continue;
    const int* e = L.exponents(i);
    a.assign(e, e + f.dim());
    a[var] += power;
    int k = H.index_of(a.data());
    if (k >= 0) h.coeff_ref(k) += f.coeff(i);
  }
  return h;
}

double top_degree_max(const PowerSeries& f, int levels) {
  const Layout& L = f.layout();
  double m = 0;
  for (int i = L.prefix(f.dmax() - levels); i < f.size(); ++i) m = std::max(m, std::abs(f.coeff(i)));
  return m;
}

// ---------------------------------------------------------------------------

nlohmann::json series_json(const PowerSeries& f) {
  nlohmann::json j;
  j["dim"] = f.dim();
  j["dmax"] = f.dmax();
  nlohmann::json terms = nlohmann::json::array();
  const Layout& L = f.layout();
  for (int i = 0; i < f.size(); ++i) {
    cplx a = f.coeff(i);
    if (a == cplx(0)) continue;
    nlohmann::json t;
    t["alpha"] = std::vector<int>(L.exponents(i), L.exponents(i) + f.dim());
    t["re"] = a.real();
    t["im"] = a.imag();
    terms.push_back(t);
  }
  j["terms"] = terms;
  return j;
}

PowerSeries series_from(const nlohmann::json& j) {
  int dim = j.at("dim").get<int>();
  int dmax = j.at("dmax").get<int>();
  PowerSeries f(dim, dmax);
  for (const auto& t : j.at("terms")) {
    auto alpha = t.at("alpha").get<std::vector<int>>();
    f.set(alpha, cplx(t.at("re").get<double>(), t.at("im").get<double>()));
  }
  return f;
}

nlohmann::json map_json(const SeriesMap& m) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : m.comps) a.push_back(series_json(c));
  return a;
}

SeriesMap map_from(const nlohmann::json& j) {
  SeriesMap m;
  for (const auto& c : j) m.comps.push_back(series_from(c));
  m.check();
  return m;
}

std::string to_json(const PowerSeries& f) { return series_json(f).dump(); }

PowerSeries series_from_json(const std::string& text) { return series_from(nlohmann::json::parse(text)); }

}  // namespace frobflat
