#include <CLI11.hpp>

#include "commands.hpp"

using namespace frobflat::cli;

int main(int argc, char** argv) {
  CLI::App app{"frobflat: flattening charts for elliptic structures"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML file mirroring the flags");
  Options o;
  app.add_option("--spec", o.spec, "field specification file");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--dmax", o.dmax, "series degree cap")->capture_default_str()->check(CLI::Range(1, 24));
  app.add_option("--grid", o.grid, "grid points per axis for norms")->capture_default_str()->check(CLI::Range(5, 4096));
  app.add_option("--tol", o.tol, "residual gate")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "probe seed")->capture_default_str();
  app.add_option("--radius", o.radius, "input ball radius")->capture_default_str()->check(CLI::PositiveNumber);

  auto* flatten = app.add_subcommand("flatten", "construct the chart and write result.json, residuals.csv");
  flatten->add_flag("--svg", o.svg, "also write residual heatmaps");
  auto* verify = app.add_subcommand("verify", "recheck a result bundle against its fields");
  verify->add_option("--result", o.result, "result.json to check")->required();
  auto* norms = app.add_subcommand("norms", "norm of a serialized series or series map");
  norms->add_option("--input", o.input, "series JSON")->required();
  norms->add_option("--space", o.space, "A, B, zygmund, holder or ck")
      ->capture_default_str()
      ->check(CLI::IsMember({"A", "B", "zygmund", "holder", "ck"}));
  norms->add_option("--s", o.s, "Zygmund order")->capture_default_str();
  norms->add_option("--m", o.m, "derivative order for holder and ck")->capture_default_str();
  norms->add_option("--a", o.a, "Hoelder exponent")->capture_default_str();
  norms->add_option("--sweep", o.sweep, "comma-separated grid sizes; prints a CSV table");
  auto* bench = app.add_subcommand("bench", "regularity table over the example corpus");
  for (auto* s : {flatten, verify, norms, bench}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kPrecondition;
  }
  if (flatten->parsed()) return guarded("flatten", run_flatten, o);
  if (verify->parsed()) return guarded("verify", run_verify, o);
  if (norms->parsed()) return guarded("norms", run_norms, o);
  return guarded("bench", run_bench, o);
}
