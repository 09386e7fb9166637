#include <iostream>

#include "smem/accept.hpp"
#include "smem/error.hpp"

// Runs the full acceptance suite and prints one PASS/FAIL line per
// criterion. Exit code 0 when everything passes, 2 otherwise.
int main() {
  smem::AcceptanceContext ctx;
  bool all_pass = true;
  for (int id = 1; id <= smem::kNumCriteria; ++id) {
    try {
      const smem::CriterionResult r = smem::run_criterion(id, ctx);
      std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << " (" << r.name << "): " << r.detail
                << std::endl;
      all_pass = all_pass && r.pass;
    } catch (const std::exception& e) {
      std::cout << "FAIL criterion " << id << ": " << e.what() << std::endl;
      all_pass = false;
    }
  }
  return all_pass ? 0 : 2;
}
