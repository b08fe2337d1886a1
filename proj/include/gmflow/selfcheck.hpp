#pragma once

#include <string>
#include <vector>

namespace gmflow {

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  bool pass = true;
};

// suite names in execution order ("all" expands to this list)
const std::vector<std::string>& selfcheck_suites();

// runs one named suite at its documented tolerances
SuiteReport run_selfcheck_suite(const std::string& suite);

// "all" or a single suite name; unknown names throw
std::vector<SuiteReport> run_selfcheck(const std::string& suite);

// machine-readable report; carries no timing so bytes are reproducible
// across thread counts and repeated runs
std::string selfcheck_report_json(const std::vector<SuiteReport>& reports);

}  // namespace gmflow
