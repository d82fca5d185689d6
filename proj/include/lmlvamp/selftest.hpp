#pragma once

#include <string>
#include <vector>

namespace lmlvamp::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick numerical checks of every layer; a few seconds in total.
std::vector<CheckResult> run_selftest();

}  // namespace lmlvamp::harness
