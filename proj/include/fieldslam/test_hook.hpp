#pragma once

#include <string>

namespace fieldslam::testhook {

// Fault-injection hook for the selftest negative control: when
// adjoint_fault_op matches an operation name, that operation's backward pass
// adds adjoint_fault_eps to its outputs, which must make the gradient checks
// fail and name the op. Empty in normal operation.
inline std::string adjoint_fault_op;
inline double adjoint_fault_eps = 1e-2;

inline double adjoint_fault(const char* op) {
  if (adjoint_fault_op.empty()) return 0.0;
  return adjoint_fault_op == op ? adjoint_fault_eps : 0.0;
}

}  // namespace fieldslam::testhook
