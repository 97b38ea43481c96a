#include "polyrg/acceptance.hpp"

#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
  CLI::App app{"Runs the acceptance criteria and prints one line per criterion"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion ids to run (default: all)")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& c : polyrg::acceptance_criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    auto r = polyrg::run_criterion(c);
    std::printf("AC%02d %s %-32s %7.2fs/%gs", r.id, r.pass ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.budget_seconds);
    for (const auto& [k, v] : r.metrics) std::printf(" %s=%.6g", k.c_str(), v);
    if (!r.error.empty()) std::printf(" error=\"%s\"", r.error.c_str());
    std::printf("\n");
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed ? 1 : 0;
}
