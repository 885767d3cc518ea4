// Acceptance suite: one line per criterion. Exit status is 0 when every
// failure is one of the criteria known to be out of reach of the model.

#include <filesystem>
#include <iostream>

#include "levicool/validation.hpp"

int main() {
  levicool::SuiteOptions o;
  o.threads = levicool::default_threads();
  o.scratch = std::filesystem::temp_directory_path() / "levicool_acceptance";
  const auto results = levicool::run_suite(o);
  for (const auto &r : results)
    std::cout << levicool::format_result(r) << std::endl;
  const bool ok = levicool::suite_ok(results);
  std::cout << (ok ? "acceptance: no unexpected failures" : "acceptance: UNEXPECTED FAILURES") << std::endl;
  return ok ? 0 : 1;
}
