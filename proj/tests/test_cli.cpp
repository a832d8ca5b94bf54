#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "frobflat/fieldspec.hpp"
#include "frobflat/report.hpp"
#include "test_util.hpp"

using namespace frobflat;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(FROBFLAT_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, k);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("frobflat_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string put(const std::string& name, const std::string& text) {
  fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int error_column(const std::string& text) {
  try {
    parse_field_spec(text);
  } catch (const SpecError& e) {
    return e.column();
  }
  return -1;
}

std::string error_text(const std::string& text) {
  try {
    parse_field_spec(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Random polynomial coefficient over the given symbols.
std::string random_poly(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, 7);
  const char* atoms[] = {"t1", "z1", "zb1", "0.25", "3i", "1.5e-3", "i", "7"};
  if (depth == 0) return atoms[pick(rng)];
  switch (pick(rng) % 5) {
    case 0: return random_poly(rng, depth - 1) + " + " + random_poly(rng, depth - 1);
    case 1: return random_poly(rng, depth - 1) + " - " + random_poly(rng, depth - 1);
    case 2: return "(" + random_poly(rng, depth - 1) + ")*" + random_poly(rng, depth - 1);
    case 3: return "-" + random_poly(rng, depth - 1);
    default: return "(" + random_poly(rng, depth - 1) + ")^2";
  }
}

}  // namespace

TEST_CASE("field spec: direct mapping") {
  FieldSpec s = parse_field_spec("L1 = dzb1 + (0.1*zb1)*dz1");
  CHECK(s.r == 0);
  CHECK(s.n == 1);
  SpecFields f = to_fields(s, 8);
  REQUIRE(f.L.size() == 1);
  CHECK(f.X.empty());
  // F = 0.1 zbar = 0.1 x - 0.1 i y
  const VectorField& L = f.L[0];
  CHECK(L.c[1].coeff({0, 0}) == cplx(1.0));
  CHECK(std::abs(L.c[0].coeff({1, 0}) - 0.1) < 1e-16);
  CHECK(std::abs(L.c[0].coeff({0, 1}) - cplx(0, -0.1)) < 1e-16);
  CHECK(L.c[0].max_degree() == 1);

  SpecFields g = to_fields(parse_field_spec("r = 1\nn = 1\nX1 = dt1 + (1+2i)*t1^2*dz1 # comment\n\nL1 = dzb1\n"), 8);
  CHECK(g.X[0].c[1].coeff({2, 0, 0}) == cplx(1, 2));
  CHECK(g.X[0].c[0].coeff({0, 0, 0}) == cplx(1));
}

TEST_CASE("field spec: errors carry positions") {
  CHECK(error_column("X1 = dt1 + (t1") == 15);
  CHECK(error_text("X1 = dt1 + (t1").find("expected ')'") != std::string::npos);
  const std::string sin_err = error_text("L1 = dzb1 + sin(z1)*dz1");
  CHECK(sin_err.find("non-polynomial") != std::string::npos);
  CHECK(sin_err.find("'sin'") != std::string::npos);
  CHECK(error_column("L1 = dzb1 + sin(z1)*dz1") == 13);
  CHECK(error_text("L1 = dzb1 + w1*dz1").find("unknown symbol 'w1'") != std::string::npos);
  CHECK(error_text("L1 = dzb1 + z1^0.5*dz1").find("non-polynomial") != std::string::npos);
  CHECK(error_text("L1 = dzb1 + z1^-1*dz1").find("non-polynomial") != std::string::npos);
  CHECK(error_text("L1 = dzb1*dz1").find("product of two basis symbols") != std::string::npos);
  CHECK(error_text("L1 = dzb1 + z1").find("basis symbol") != std::string::npos);
  CHECK(error_text("L1 = dzb2").find("outside") != std::string::npos);
  CHECK(error_text("n = 2\nL1 = dzb1").find("missing field L2") != std::string::npos);
  CHECK(error_text("L1 = dzb1 $").find("unexpected character") != std::string::npos);
  try {
    parse_field_spec("r = 1\nn = 1\nX1 = dt1\nL1 = dzb1 + (t1*dz1");
    FAIL("expected an error");
  } catch (const SpecError& e) {
    CHECK(e.line() == 4);
    CHECK(e.stage() == "parse");
  }
  CHECK_THROWS_AS(to_fields(parse_field_spec("L1 = dzb1 + z1^9*dz1"), 8), PreconditionError);
}

TEST_CASE("field spec: parse, serialize, parse is the identity") {
  for (const char* text : {"L1 = dzb1 + (0.1*zb1)*dz1", "r = 1\nn = 1\nX1 = dt1 + -(t1 - (z1 - zb1))*dzb1\nL1 = dzb1\n",
                           "L1 = dzb1 + ((z1*zb1)^2 - -2)*dz1", "L1 = dzb1 + (2*(3*z1))*dz1"}) {
    FieldSpec a = parse_field_spec(text);
    FieldSpec b = parse_field_spec(to_text(a));
    CAPTURE(text);
    CHECK(a == b);
    CHECK(to_text(a) == to_text(b));
  }
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    const std::string text = "r = 1\nn = 1\nX1 = dt1\nL1 = dzb1 + (" + random_poly(rng, 3) + ")*dz1 - 0.5*(" + random_poly(rng, 1) + ")*dzb1";
    FieldSpec a = parse_field_spec(text);
    CAPTURE(text);
    CHECK(a == parse_field_spec(to_text(a)));
  }
}

TEST_CASE("result bundle round trip and tamper detection") {
  ResultBundle b;
  Instance in = beltrami_instance(0.1, 8);
  b.result = flatten(in.X, in.L, b.config);
  b.report = verify_chart(in.X, in.L, b.result, verification_probes(2, 0));
  b.gates = check_gates(b.result, b.report, 1e-8);
  const std::string text = bundle_json(b).dump(1);
  ResultBundle c = bundle_from_json(nlohmann::ordered_json::parse(text));
  CHECK(bundle_json(c).dump(1) == text);
  for (int i = 0; i < 2; ++i) CHECK(testutil::max_diff(c.result.chart.phi[i], b.result.chart.phi[i]) == 0.0);
  // the restored result verifies like the original
  ResidualReport fd = verify_chart(in.X, in.L, c.result, verification_probes(2, 1));
  CHECK(fd.span < 1e-7);

  nlohmann::ordered_json j = nlohmann::ordered_json::parse(text);
  j["chart"]["K2"] = 7.0;
  CHECK_THROWS_AS(bundle_from_json(j), ProvenanceError);
  j = nlohmann::ordered_json::parse(text);
  j["format"] = "other";
  CHECK_THROWS_AS(bundle_from_json(j), ProvenanceError);
  std::string csv = residual_csv(b.report);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
  CHECK(residual_svg(b.report, "span").find("<svg") == 0);
}

TEST_CASE("cli flatten: flat model") {
  const std::string spec = put("flat.txt", "r = 1\nn = 1\nX1 = dt1\nL1 = dzb1\n");
  const fs::path out = scratch() / "flat";
  Run r = cli("flatten --spec " + spec + " --out " + out.string());
  CHECK(r.code == 0);
  auto j = nlohmann::json::parse(slurp(out / "result.json"));
  CHECK(j["format"] == "frobflat-result-v1");
  for (const auto& e : j["A"]["entries"]) CHECK(e["terms"].empty());
  CHECK(j["a_norm"] == 0.0);
}

TEST_CASE("cli flatten: Beltrami span residual from the CSV") {
  const std::string spec = put("bel.txt", "L1 = dzb1 + (0.1*zb1)*dz1\n");
  const fs::path out = scratch() / "bel";
  Run r = cli("flatten --svg --spec " + spec + " --out " + out.string());
  CHECK(r.code == 0);
  CHECK(r.output.find("gates: pass") != std::string::npos);
  std::istringstream csv(slurp(out / "residuals.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "probe,v0,v1,span,relation,commutator,det");
  int rows = 0;
  double worst = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    REQUIRE(cells.size() == 7);
    worst = std::max(worst, std::stod(cells[3]));
    ++rows;
  }
  CHECK(rows == 64);
  CHECK(worst < 1e-7);
  CHECK(fs::exists(out / "span.svg"));

  SUBCASE("verify accepts the bundle and rejects tampering") {
    Run ok = cli("verify --spec " + spec + " --result " + (out / "result.json").string() + " --out " + out.string());
    CHECK(ok.code == 0);
    std::string text = slurp(out / "result.json");
    const size_t at = text.find("\"K2\"");
    REQUIRE(at != std::string::npos);
    text.replace(at, 4, "\"K3\"");
    const std::string bad = put("tampered.json", text);
    Run no = cli("verify --spec " + spec + " --result " + bad);
    CHECK(no.code == 2);
    CHECK(no.output.find("provenance mismatch") != std::string::npos);
    const std::string other = put("bel2.txt", "L1 = dzb1 + (0.1000001*zb1)*dz1\n");
    Run wrong = cli("verify --spec " + other + " --result " + (out / "result.json").string());
    CHECK(wrong.code == 2);
    CHECK(wrong.output.find("provenance mismatch") != std::string::npos);
  }
}

TEST_CASE("cli flatten: failures name the stage") {
  const std::string bad = put("noninv.txt", "r = 1\nn = 1\nX1 = dt1\nL1 = dzb1 + t1*dz1\n");
  Run r = cli("flatten --spec " + bad + " --out " + (scratch() / "noninv").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("structure check failed") != std::string::npos);
  CHECK(r.output.find("probe 0") != std::string::npos);
  CHECK(r.output.find("stage 'structure'") != std::string::npos);

  Run p = cli("flatten --spec " + put("syntax.txt", "X1 = dt1 + (t1"));
  CHECK(p.code == 2);
  CHECK(p.output.find("column 15") != std::string::npos);

  Run d = cli("flatten --dmax 6 --spec " + put("big.txt", "L1 = dzb1 + (1e6*zb1)*dz1\n") + " --out " +
              (scratch() / "big").string());
  CHECK(d.code == 3);
  CHECK(d.output.find("stage 'scale'") != std::string::npos);

  Run m = cli("flatten --spec " + (scratch() / "missing.txt").string());
  CHECK(m.code == 2);
  Run u = cli("flatten --bogus");
  CHECK(u.code == 2);
}

TEST_CASE("cli norms") {
  const std::string t2 = put("t2.json", R"({"dim":1,"dmax":2,"terms":[{"alpha":[2],"re":1.0,"im":0.0}]})");
  Run r = cli("norms --input " + t2 + " --radius 0.5");
  CHECK(r.code == 0);
  auto j = nlohmann::json::parse(r.output);
  CHECK(j["value"].get<double>() == 0.25);
  Run s = cli("norms --input " + t2 + " --radius 0.5 --space zygmund --s 1.5 --sweep 9,17");
  CHECK(s.code == 0);
  CHECK(s.output.rfind("grid,value\n9,", 0) == 0);
}

TEST_CASE("cli config file mirrors the flags") {
  const std::string spec = put("cfg_bel.txt", "L1 = dzb1 + (0.1*zb1)*dz1\n");
  const fs::path out = scratch() / "cfg";
  const std::string cfg = put("run.toml", "dmax = 6\nseed = 3\nout = \"" + out.string() + "\"\n");
  Run r = cli("flatten --config " + cfg + " --spec " + spec);
  CHECK(r.code == 0);
  auto j = nlohmann::json::parse(slurp(out / "result.json"));
  CHECK(j["dmax"] == 6);
  CHECK(j["config"]["seed"] == 3);
}

TEST_CASE("cli outputs are byte-identical across runs") {
  const std::string spec = put("det.txt", "r = 1\nn = 1\nX1 = dt1\nL1 = dzb1 + (0.1*zb1 + 0.05*z1*zb1)*dz1\n");
  const fs::path a = scratch() / "det_a", b = scratch() / "det_b";
  Run ra = cli("flatten --svg --spec " + spec + " --out " + a.string());
  Run rb = cli("flatten --svg --spec " + spec + " --out " + b.string());
  CHECK(ra.code == 0);
  CHECK(rb.code == 0);
  CHECK(ra.output == rb.output);
  for (const char* f : {"result.json", "residuals.csv", "span.svg", "relation.svg", "commutator.svg"})
    CHECK(slurp(a / f) == slurp(b / f));
}
