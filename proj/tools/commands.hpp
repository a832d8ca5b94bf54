#pragma once

#include <string>

namespace frobflat::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kGateFailure = 1;
inline constexpr int kPrecondition = 2;
inline constexpr int kDivergence = 3;

struct Options {
  std::string spec;
  std::string out = "frobflat-out";
  int dmax = 8;
  int grid = 32;
  double tol = 1e-8;
  unsigned long long seed = 0;
  double radius = 1.0;
  // flatten
  bool svg = false;
  // verify
  std::string result;
  // norms
  std::string input;
  std::string space = "A";
  double s = 1.0;
  int m = 0;
  double a = 0.5;
  std::string sweep;
};

int run_flatten(const Options& o);
int run_verify(const Options& o);
int run_norms(const Options& o);
int run_bench(const Options& o);

// Runs fn, reporting library errors on stderr with their stage and mapping
// them to exit codes.
int guarded(const char* command, int (*fn)(const Options&), const Options& o);

}  // namespace frobflat::cli
