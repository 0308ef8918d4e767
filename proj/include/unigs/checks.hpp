#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace unigs {

struct CheckResult {
  std::string name;
  bool pass = false;
  double ms = 0;
  std::string detail;  // failure reason or a short success note
};

struct CheckReport {
  std::vector<CheckResult> results;

  // An empty suite counts as failure: a harness that silently ran nothing
  // must not look green.
  bool all_pass() const {
    if (results.empty()) return false;
    for (const CheckResult& r : results)
      if (!r.pass) return false;
    return true;
  }
};

// Runs every module's fast invariant suite (geometry oracles, sampling
// equivalences, attention contracts, compositing identities, pipeline
// gradient health, serialization round trips). Honors the process-wide
// injected fault, so a corrupted kernel shows up as named failures.
CheckReport run_checks();

void print_report(const CheckReport& report, std::ostream& os);

}  // namespace unigs
