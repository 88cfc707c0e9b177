#pragma once

#include "fieldslam/param_store.hpp"

#include <functional>
#include <span>

namespace fieldslam {

struct GradCheckReport {
  double max_rel_err = 0.0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of the analytic gradients currently held in
// store.grads(). `f` must be a pure scalar forward pass over the store values
// (it may scribble on grads; they are restored). Relative error is
// |analytic - fd| / max(1, |fd|). Throws on a non-finite f evaluation.
GradCheckReport gradient_check(const std::function<double(ParamStore&)>& f, ParamStore& store,
                               double h, std::span<const Eigen::Index> subset);

}  // namespace fieldslam
