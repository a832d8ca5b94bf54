#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "frobflat/fieldspec.hpp"
#include "frobflat/funcspaces.hpp"
#include "frobflat/json_io.hpp"
#include "frobflat/pipeline.hpp"
#include "frobflat/report.hpp"

namespace frobflat::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path, const char* what) {
  if (path.empty()) throw PreconditionError(std::string("no ") + what + " given", "input");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError(std::string("cannot read ") + what + " '" + path + "'", "input");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw PreconditionError("cannot write '" + path.string() + "'", "output");
}

fs::path out_dir(const Options& o) {
  fs::path d(o.out);
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw PreconditionError("cannot create output directory '" + o.out + "'", "output");
  return d;
}

SpecFields load_fields(const Options& o, int dmax) {
  return to_fields(parse_field_spec(read_file(o.spec, "spec file")), dmax);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void summary(const ResidualReport& fd, const FlattenResult& res, const Gates& g) {
  std::cout << "K2 " << num(res.chart.K2) << "  gamma " << num(res.chart.gamma) << "  A-norm " << num(res.a_norm)
            << "\n";
  std::cout << "span " << num(fd.span) << "  commutator " << num(fd.commutator) << "  relation " << num(fd.relation)
            << "  det [" << num(fd.det_min) << ", " << num(fd.det_max) << "]\n";
  if (g.ok) {
    std::cout << "gates: pass (tol " << num(g.tol) << ")\n";
  } else {
    std::cout << "gates: FAIL:";
    for (const auto& f : g.failed) std::cout << " [" << f << "]";
    std::cout << "\n";
  }
}

}  // namespace

int run_flatten(const Options& o) {
  SpecFields f = load_fields(o, o.dmax);
  FlattenConfig cfg;
  cfg.dmax = o.dmax;
  cfg.radius = o.radius;
  cfg.seed = o.seed;
  ResultBundle b;
  b.config = cfg;
  b.result = flatten(f.X, f.L, cfg);
  const int N = b.result.chart.dim();
  b.report = verify_chart(f.X, f.L, b.result, verification_probes(N, o.seed));
  add_norm_table(b.report, f.X, f.L, b.result, o.radius, o.grid);
  b.gates = check_gates(b.result, b.report, o.tol);

  const fs::path dir = out_dir(o);
  write_file(dir / "result.json", bundle_json(b).dump(1) + "\n");
  write_file(dir / "residuals.csv", residual_csv(b.report));
  if (o.svg)
    for (const char* w : {"span", "relation", "commutator"})
      write_file(dir / (std::string(w) + ".svg"), residual_svg(b.report, w));
  summary(b.report, b.result, b.gates);
  return b.gates.ok ? kOk : kGateFailure;
}

int run_verify(const Options& o) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_file(o.result, "result bundle"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ProvenanceError(std::string("result bundle is not JSON: ") + e.what(), "verify");
  }
  ResultBundle b = bundle_from_json(j);
  SpecFields f = load_fields(o, b.result.dmax);
  const int N = b.result.chart.dim();
  // fresh points, disjoint from the ones recorded by flatten
  ResidualReport fd = verify_chart(f.X, f.L, b.result, verification_probes(N, b.config.seed + 1));
  Gates g = check_gates(b.result, fd, o.tol);
  write_file(out_dir(o) / "verify.csv", residual_csv(fd));
  summary(fd, b.result, g);
  return g.ok ? kOk : kGateFailure;
}

int run_norms(const Options& o) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(o.input, "input file"));
  } catch (const nlohmann::json::parse_error& e) {
    throw PreconditionError(std::string("input is not JSON: ") + e.what(), "norms");
  }
  const bool is_map = j.is_array();
  SeriesMap map;
  PowerSeries one;
  if (is_map) map = map_from(j);
  else one = series_from(j);

  auto estimate = [&](int grid) -> NormEstimate {
    if (o.space == "A") return is_map ? anorm(map, o.radius) : anorm(one, o.radius);
    if (o.space == "B") {
      if (is_map) throw PreconditionError("the B norm takes a single series", "norms");
      return bnorm_estimate(one, o.radius);
    }
    const int dim = is_map ? map.comps.at(0).dim() : one.dim();
    GridField g = is_map ? GridField::from_map(map, o.radius, norm_grid(dim, grid))
                         : GridField::from_series(one, o.radius, norm_grid(dim, grid));
    if (o.space == "zygmund") return zygmund_estimate(g, o.s);
    if (o.space == "holder") return holder_estimate(g, o.m, o.a);
    return ck_estimate(g, o.m);
  };

  if (o.sweep.empty()) {
    std::cout << to_json(estimate(o.grid)) << "\n";
    return kOk;
  }
  std::cout << "grid,value\n";
  std::stringstream ss(o.sweep);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int g = 0;
    try {
      g = std::stoi(item);
    } catch (const std::exception&) {
      throw PreconditionError("bad grid size '" + item + "' in --sweep", "norms");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", estimate(g).value);
    std::cout << g << ',' << buf << "\n";
  }
  return kOk;
}

int run_bench(const Options& o) {
  GainConfig cfg;
  cfg.flatten.dmax = o.dmax;
  cfg.flatten.radius = o.radius;
  cfg.flatten.seed = o.seed;
  cfg.grid = o.grid;
  std::vector<GainRow> rows = regularity_gain_probe(default_corpus(o.dmax, o.seed), cfg);
  const std::string csv = gain_csv(rows);
  write_file(out_dir(o) / "bench.csv", csv);
  std::cout << csv;
  const bool ok = ratios_bounded(rows);
  std::cout << (ok ? "ratios bounded: yes\n" : "ratios bounded: NO\n");
  return ok ? kOk : kGateFailure;
}

int guarded(const char* command, int (*fn)(const Options&), const Options& o) {
  auto report = [&](const Error& e, int code) {
    std::cerr << "frobflat " << command << ": error";
    if (!e.stage().empty()) std::cerr << " in stage '" << e.stage() << "'";
    std::cerr << ": " << e.what() << "\n";
    return code;
  };
  try {
    return fn(o);
  } catch (const DivergenceError& e) {
    return report(e, kDivergence);
  } catch (const StepError& e) {
    return report(e, kDivergence);
  } catch (const Error& e) {
    return report(e, kPrecondition);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "frobflat " << command << ": error in stage 'input': malformed JSON: " << e.what() << "\n";
    return kPrecondition;
  }
}

}  // namespace frobflat::cli
