#pragma once

#include <functional>
#include <string>
#include <vector>

#include <bodybench/parallel.hpp>

namespace bodybench {

struct CheckResult {
  int criterion = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  bool quick = false;       // reduced corpus sizes and trial counts
  bool force_fail = false;  // appends a failing check
  std::vector<int> only;    // criteria to run; empty runs all
  int jobs = default_jobs();
  // Called after each check, e.g. to print progressively.
  std::function<void(const CheckResult&)> on_result;
};

// Acceptance criteria 1-8 on generated data. Criterion 0 is the forced failure.
std::vector<CheckResult> run_acceptance(const AcceptanceOptions& options);

// "criterion N  PASS  title  (detail, seconds)"
std::string format_check(const CheckResult& result);

}  // namespace bodybench
