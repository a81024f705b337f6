#include "fracsense/acceptance.hpp"

#include <iostream>

int main() {
  const auto results = fracsense::run_acceptance(std::cout);
  int failed = 0;
  for (const auto& r : results) failed += !r.pass;
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
