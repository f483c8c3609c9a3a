#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace diffrank::verify {

struct SuiteResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  double max_error = 0.0;
  double elapsed_seconds = 0.0;
  std::string detail;

  bool passed() const { return failures == 0; }
};

/// Names of the randomized verification suites, in run order:
/// argmin-equivalence, recall-closed-form, coarea-identity, ap-agreement,
/// gradient-fd, margin-reduction.
std::vector<std::string> suite_names();

/// Run one suite. `trials` <= 0 selects the default (1000, except
/// gradient-fd which counts checked points). Throws std::invalid_argument
/// for an unknown name.
SuiteResult run_suite(std::string_view name, std::uint64_t seed,
                      int trials = 0);

std::vector<SuiteResult> run_all(std::uint64_t seed, int trials = 0);

}  // namespace diffrank::verify
