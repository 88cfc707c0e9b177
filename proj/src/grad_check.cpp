#include "fieldslam/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace fieldslam {

GradCheckReport gradient_check(const std::function<double(ParamStore&)>& f, ParamStore& store,
                               double h, std::span<const Eigen::Index> subset) {
  if (!(h > 0.0)) throw std::invalid_argument("gradient_check: h must be > 0");
  const VecX analytic = store.grads();
  GradCheckReport report;
  for (Eigen::Index idx : subset) {
    const double x0 = store.values()[idx];
    store.values()[idx] = x0 + h;
    const double fp = f(store);
    store.values()[idx] = x0 - h;
    const double fm = f(store);
    store.values()[idx] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      store.grads() = analytic;
      throw std::runtime_error("gradient_check: non-finite function value");
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[idx] - fd) / std::max(1.0, std::abs(fd));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = idx;
      report.worst_analytic = analytic[idx];
      report.worst_numeric = fd;
    }
  }
  store.grads() = analytic;
  return report;
}

}  // namespace fieldslam
