#pragma once

#include "flowsearch/samplers/common.hpp"

namespace flowsearch {

/// Best-of-N: total / steps independent trajectories of the plan's process,
/// best terminal reward wins (lowest index on ties).
template <class Oracle>
SearchResult best_of_n(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                       std::uint64_t seed, Oracle& oracle, const SamplerOptions& opt = {}) {
  const int m = plan.steps();
  const std::size_t calls_at_start = oracle.calls();
  const std::size_t requested = opt.n > 0 ? static_cast<std::size_t>(opt.n) : total_nfe;
  const std::size_t n = chain_count(requested, total_nfe, m);
  const auto dim = static_cast<Eigen::Index>(oracle.gmm().dim());

  SearchResult r;
  r.per_step_consumption.assign(static_cast<std::size_t>(m), 0);
  for (std::size_t c = 0; c < n; ++c) {
    const Vec x1 = initial_noise(seed, c, dim);
    const auto out = run_process(plan, x1, {seed, Stream::proposal, 0, c}, oracle);
    r.offer(out.x0, evaluate_reward(spec, out.x0));
  }
  r.init_consumption = n;
  for (int i = 0; i + 1 < m; ++i) r.per_step_consumption[static_cast<std::size_t>(i)] = n;
  finalize_result(r, oracle.calls() - calls_at_start, total_nfe);
  return r;
}

}  // namespace flowsearch
