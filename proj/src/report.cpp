#include "frobflat/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "frobflat/errors.hpp"
#include "frobflat/json_io.hpp"

namespace frobflat {

using ojson = nlohmann::ordered_json;

namespace {

ojson cmatrix_json(const Eigen::MatrixXcd& m) {
  ojson re = ojson::array(), im = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson a = ojson::array(), b = ojson::array();
    for (int j = 0; j < m.cols(); ++j) {
      a.push_back(m(i, j).real());
      b.push_back(m(i, j).imag());
    }
    re.push_back(a);
    im.push_back(b);
  }
  ojson j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["re"] = re;
  j["im"] = im;
  return j;
}

Eigen::MatrixXcd cmatrix_from(const ojson& j) {
  const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
  Eigen::MatrixXcd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) m(i, k) = cplx(j.at("re").at(i).at(k).get<double>(), j.at("im").at(i).at(k).get<double>());
  return m;
}

ojson rmatrix_json(const Eigen::MatrixXd& m) {
  ojson a = ojson::array();
  for (int i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

Eigen::MatrixXd rmatrix_from(const ojson& j, int n) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

ojson series_list(const std::vector<PowerSeries>& v) {
  ojson a = ojson::array();
  for (const auto& s : v) a.push_back(ojson(series_json(s)));
  return a;
}

std::vector<PowerSeries> series_list_from(const ojson& j) {
  std::vector<PowerSeries> v;
  for (const auto& s : j) v.push_back(series_from(nlohmann::json(s)));
  return v;
}

ojson smatrix_json(const SeriesMatrix& m) {
  ojson j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["entries"] = series_list(m.e);
  return j;
}

SeriesMatrix smatrix_from(const ojson& j) {
  SeriesMatrix m;
  m.rows = j.at("rows").get<int>();
  m.cols = j.at("cols").get<int>();
  m.e = series_list_from(j.at("entries"));
  if (static_cast<int>(m.e.size()) != m.rows * m.cols) throw ShapeError("matrix entry count mismatch");
  return m;
}

ojson config_json(const FlattenConfig& c) {
  ojson j;
  j["dmax"] = c.dmax;
  j["radius"] = c.radius;
  j["seed"] = c.seed;
  j["probes"] = c.probes;
  j["max_halvings"] = c.max_halvings;
  j["a_bound"] = c.a_bound;
  j["trust"] = c.trust;
  j["zeta0"] = c.zeta0;
  return j;
}

FlattenConfig config_from(const ojson& j) {
  FlattenConfig c;
  c.dmax = j.at("dmax").get<int>();
  c.radius = j.at("radius").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.probes = j.at("probes").get<int>();
  c.max_halvings = j.at("max_halvings").get<int>();
  c.a_bound = j.at("a_bound").get<double>();
  c.trust = j.at("trust").get<double>();
  c.zeta0 = j.at("zeta0").get<std::vector<double>>();
  return c;
}

ojson chart_json(const Chart& c) {
  ojson j;
  j["r"] = c.r;
  j["n"] = c.n;
  j["K2"] = c.K2;
  j["gamma"] = c.gamma;
  j["eta0"] = c.eta0;
  j["eta1"] = c.eta1;
  j["eta3"] = c.eta3;
  j["det_min"] = c.det_min;
  j["det_max"] = c.det_max;
  j["phi"] = series_list(c.phi.comps);
  ojson nz;
  nz["shift"] = std::vector<double>(c.normalization.shift.data(),
                                    c.normalization.shift.data() + c.normalization.shift.size());
  nz["matrix"] = rmatrix_json(c.normalization.matrix);
  j["normalization"] = nz;
  j["recombination"] = cmatrix_json(c.recombination);
  ojson tr = ojson::array();
  for (const auto& s : c.trace) tr.push_back(ojson{{"stage", s.stage}, {"info", s.info}});
  j["trace"] = tr;
  return j;
}

Chart chart_from(const ojson& j) {
  Chart c;
  c.r = j.at("r").get<int>();
  c.n = j.at("n").get<int>();
  c.K2 = j.at("K2").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.eta0 = j.at("eta0").get<double>();
  c.eta1 = j.at("eta1").get<double>();
  c.eta3 = j.at("eta3").get<double>();
  c.det_min = j.at("det_min").get<double>();
  c.det_max = j.at("det_max").get<double>();
  c.phi = SeriesMap(series_list_from(j.at("phi")));
  const int N = c.dim();
  if (c.phi.d_out() != N) throw ShapeError("chart has the wrong number of components");
  auto shift = j.at("normalization").at("shift").get<std::vector<double>>();
  if (static_cast<int>(shift.size()) != N) throw ShapeError("normalization shift has the wrong size");
  c.normalization.shift = Eigen::Map<Eigen::VectorXd>(shift.data(), N);
  c.normalization.matrix = rmatrix_from(j.at("normalization").at("matrix"), N);
  c.recombination = cmatrix_from(j.at("recombination"));
  for (const auto& s : j.at("trace")) c.trace.push_back({s.at("stage").get<std::string>(), s.at("info")});
  return c;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

ojson report_json(const ResidualReport& rep) {
  ojson j;
  j["span"] = rep.span;
  j["commutator"] = rep.commutator;
  j["relation"] = rep.relation;
  j["det_min"] = rep.det_min;
  j["det_max"] = rep.det_max;
  ojson pr = ojson::array();
  for (const auto& p : rep.probes) {
    ojson q;
    q["point"] = p.point;
    q["span"] = p.span;
    q["relation"] = p.relation;
    q["commutator"] = p.commutator;
    q["det"] = p.det;
    pr.push_back(q);
  }
  j["probes"] = pr;
  ojson nr = ojson::array();
  for (const auto& n : rep.norms) nr.push_back(ojson{{"what", n.what}, {"s", n.s}, {"value", n.value}});
  j["norms"] = nr;
  return j;
}

ResidualReport report_from_json(const ojson& j) {
  ResidualReport rep;
  rep.span = j.at("span").get<double>();
  rep.commutator = j.at("commutator").get<double>();
  rep.relation = j.at("relation").get<double>();
  rep.det_min = j.at("det_min").get<double>();
  rep.det_max = j.at("det_max").get<double>();
  for (const auto& q : j.at("probes"))
    rep.probes.push_back({q.at("point").get<std::vector<double>>(), q.at("span").get<double>(),
                          q.at("relation").get<double>(), q.at("commutator").get<double>(),
                          q.at("det").get<double>()});
  for (const auto& n : j.at("norms"))
    rep.norms.push_back({n.at("what").get<std::string>(), n.at("s").get<double>(), n.at("value").get<double>()});
  return rep;
}

ojson bundle_json(const ResultBundle& b) {
  const FlattenResult& r = b.result;
  ojson j;
  j["format"] = kResultFormat;
  j["input_hash"] = r.input_hash;
  j["config"] = config_json(b.config);
  j["dmax"] = r.dmax;
  j["chart"] = chart_json(r.chart);
  j["A"] = smatrix_json(r.A);
  j["a_norm"] = r.a_norm;
  j["w"] = series_list(r.w);
  j["internal"] = report_json(r.internal);
  j["report"] = report_json(b.report);
  j["gates"] = ojson{{"tol", b.gates.tol}, {"ok", b.gates.ok}, {"failed", b.gates.failed}};
  j["digest"] = content_hash(j.dump());
  return j;
}

ResultBundle bundle_from_json(const ojson& in) {
  if (!in.is_object() || !in.contains("format") || in.at("format") != kResultFormat)
    throw ProvenanceError(std::string("provenance mismatch: not a ") + kResultFormat + " bundle", "verify");
  if (!in.contains("digest") || !in.at("digest").is_string())
    throw ProvenanceError("provenance mismatch: the bundle carries no digest", "verify");
  ojson body = in;
  body.erase("digest");
  if (content_hash(body.dump()) != in.at("digest").get<std::string>())
    throw ProvenanceError("provenance mismatch: the bundle digest does not match its content", "verify");
  ResultBundle b;
  try {
    b.config = config_from(body.at("config"));
    FlattenResult& r = b.result;
    r.input_hash = body.at("input_hash").get<std::string>();
    r.dmax = body.at("dmax").get<int>();
    r.chart = chart_from(body.at("chart"));
    r.A = smatrix_from(body.at("A"));
    r.a_norm = body.at("a_norm").get<double>();
    r.w = series_list_from(body.at("w"));
    r.internal = report_from_json(body.at("internal"));
    b.report = report_from_json(body.at("report"));
    b.gates.tol = body.at("gates").at("tol").get<double>();
    b.gates.ok = body.at("gates").at("ok").get<bool>();
    b.gates.failed = body.at("gates").at("failed").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProvenanceError(std::string("malformed result bundle: ") + e.what(), "verify");
  }
  return b;
}

std::string residual_csv(const ResidualReport& rep) {
  std::ostringstream os;
  const size_t dim = rep.probes.empty() ? 0 : rep.probes[0].point.size();
  os << "probe";
  for (size_t a = 0; a < dim; ++a) os << ",v" << a;
  os << ",span,relation,commutator,det\n";
  for (size_t i = 0; i < rep.probes.size(); ++i) {
    const auto& p = rep.probes[i];
    os << i;
    for (double x : p.point) os << ',' << fmt(x);
    os << ',' << fmt(p.span) << ',' << fmt(p.relation) << ',' << fmt(p.commutator) << ',' << fmt(p.det) << '\n';
  }
  return os.str();
}

std::string gain_csv(const std::vector<GainRow>& rows) {
  std::ostringstream os;
  os << "example,prescale,gamma,K2,input_norm,chart_norm,ratio\n";
  for (const auto& r : rows)
    os << r.example << ',' << fmt(r.prescale) << ',' << fmt(r.gamma) << ',' << fmt(r.K2) << ',' << fmt(r.input_norm)
       << ',' << fmt(r.chart_norm) << ',' << fmt(r.ratio) << '\n';
  return os.str();
}

std::string residual_svg(const ResidualReport& rep, const std::string& which, int bins) {
  auto pick = [&](const ProbeResidual& p) {
    if (which == "span") return p.span;
    if (which == "relation") return p.relation;
    if (which == "commutator") return p.commutator;
    throw ShapeError("unknown residual '" + which + "'");
  };
  const int cell = 24, pad = 40, side = bins * cell;
  std::vector<double> grid(static_cast<size_t>(bins) * bins, -1.0);
  for (const auto& p : rep.probes) {
    const double a = p.point.size() > 0 ? p.point[0] : 0.0, b = p.point.size() > 1 ? p.point[1] : 0.0;
    // probes live in the half-radius ball
    int i = std::clamp(static_cast<int>((a + 0.5) * bins), 0, bins - 1);
    int k = std::clamp(static_cast<int>((b + 0.5) * bins), 0, bins - 1);
    double& g = grid[static_cast<size_t>(k) * bins + i];
    g = std::max(g, pick(p));
  }
  const double lo = -16, hi = 0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side + 2 * pad + 80 << "\" height=\"" << side + 2 * pad
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  os << "<text x=\"" << pad << "\" y=\"20\">" << which << " residual, log10, max per cell</text>\n";
  for (int k = 0; k < bins; ++k)
    for (int i = 0; i < bins; ++i) {
      const double g = grid[static_cast<size_t>(k) * bins + i];
      std::string fill = "#dddddd";
      if (g >= 0) {
        double t = g > 0 ? (std::log10(g) - lo) / (hi - lo) : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(255 * t), 40, static_cast<int>(255 * (1 - t)));
        fill = buf;
      }
      os << "<rect x=\"" << pad + i * cell << "\" y=\"" << pad + (bins - 1 - k) * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
    }
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const int y = pad + side - side * t / 4;
    os << "<text x=\"" << pad + side + 10 << "\" y=\"" << y << "\">1e" << static_cast<int>(v) << "</text>\n";
  }
  os << "<text x=\"" << pad << "\" y=\"" << pad + side + 20 << "\">v0 in [-1/2, 1/2]; v1 vertical</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace frobflat
