#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fieldslam {

struct SelftestOptions {
  uint64_t seed = 0;
  int threads = 0;
  // Fault-injection negative control: name of the op whose adjoint is broken
  // on purpose ("oneblob", "hashgrid", "triplane", "mlp", "density").
  std::string fault_op;
};

struct SelftestCheck {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;
  bool all_pass = true;
};

// Gradient-integrity, oracle-equivalence and rendering-invariant checks.
// Prints one line per check to os.
SelftestReport run_selftest(const SelftestOptions& opts, std::ostream& os);

}  // namespace fieldslam
