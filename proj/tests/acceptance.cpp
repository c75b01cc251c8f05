#include <iostream>

#include "ttllab/checks.hpp"

int main() {
  using namespace ttllab::checks;
  int failed = 0;
  for (const auto& check : all_checks()) {
    const CheckResult r = check();
    std::cout << format(r) << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
