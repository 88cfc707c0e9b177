#include "fieldslam/adam.hpp"

#include <cmath>

namespace fieldslam {

AdamStepReport adam_step(ParamStore& store, AdamState& state, const GroupMask& active) {
  AdamStepReport report;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);

  // A group with any non-finite gradient is rejected as a whole.
  GroupMask finite{};
  finite.fill(true);
  const VecX& g = store.grads();
  const auto& groups = store.groups();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) finite[static_cast<size_t>(groups[static_cast<size_t>(i)])] = false;
  }

  std::array<double, kNumParamGroups> corr1{}, corr2{};
  for (int gi = 0; gi < kNumParamGroups; ++gi) {
    const AdamHyper& h = state.hyper[static_cast<size_t>(gi)];
    corr1[static_cast<size_t>(gi)] = 1.0 - std::pow(h.beta1, t);
    corr2[static_cast<size_t>(gi)] = 1.0 - std::pow(h.beta2, t);
  }

  VecX& x = store.values();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const size_t gi = static_cast<size_t>(groups[static_cast<size_t>(i)]);
    if (!active[gi]) continue;
    if (!finite[gi]) continue;
    const AdamHyper& h = state.hyper[gi];
    const double grad = g[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * grad;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * grad * grad;
    const double m_hat = state.m[i] / corr1[gi];
    const double v_hat = state.v[i] / corr2[gi];
    x[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }

  for (int gi = 0; gi < kNumParamGroups; ++gi) {
    const size_t s = static_cast<size_t>(gi);
    report.stepped[s] = active[s] && finite[s];
    report.rejected[s] = active[s] && !finite[s];
  }
  return report;
}

}  // namespace fieldslam
