#pragma once

#include "flowsearch/samplers/common.hpp"

namespace flowsearch {

namespace detail {

/// Default proposals per selection so that every stochastic step of a chain
/// with `chain_budget` NFE gets the same count: (budget - 1) / (steps - 1).
inline std::size_t derived_k(std::size_t chain_budget, int steps) {
  if (steps <= 1) return 1;
  return std::max<std::size_t>(1, (chain_budget - 1) / static_cast<std::size_t>(steps - 1));
}

/// N chains; each advances through blocks of `interval` stochastic steps by
/// running k copies of the block from the current latent and keeping the
/// copy with the highest value at the block's end. The block holding the
/// last stochastic step also takes the final noiseless step, so its
/// selection is on the terminal reward.
template <class Oracle>
SearchResult blockwise_search(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                              std::uint64_t seed, Oracle& oracle, std::size_t chains_requested,
                              int k_requested, int interval) {
  if (interval < 1) throw DomainError("search: selection interval must be >= 1");
  const int m = plan.steps();
  const std::size_t calls_at_start = oracle.calls();
  const std::size_t n = chain_count(chains_requested, total_nfe, m);
  const auto budgets = uniform_split(total_nfe, n);
  const auto dim = static_cast<Eigen::Index>(oracle.gmm().dim());

  SearchResult r;
  r.per_step_consumption.assign(static_cast<std::size_t>(m), 0);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t k_max =
        k_requested > 0 ? static_cast<std::size_t>(k_requested) : derived_k(budgets[c], m);
    Node cur = evaluate_node(plan, spec, 0, initial_noise(seed, c, dim), oracle);
    std::size_t spent = 1;
    r.init_consumption += 1;

    if (m == 1) {
      const Node end = evaluate_node(plan, spec, 1, advance(plan, 0, cur.x, cur.u, Vec::Zero(dim)), oracle);
      r.offer(end.x, end.value);
      continue;
    }

    const int last_stochastic = m - 2;
    for (int b = 0; b <= last_stochastic; b += interval) {
      const int e = std::min(b + interval, last_stochastic + 1);  // landing index
      const bool terminal = e == m - 1;
      const std::size_t per_copy = static_cast<std::size_t>(e - b);
      const std::size_t reserve = static_cast<std::size_t>(m - 1 - e);
      const std::size_t avail = budgets[c] - spent - reserve;
      const std::size_t k = std::max<std::size_t>(1, std::min(k_max, avail / per_copy));

      std::vector<Node> copies;
      std::vector<double> values;
      copies.reserve(k);
      for (std::size_t j = 0; j < k; ++j) {
        Node node = cur;
        for (int s = b; s < e; ++s)
          node = evaluate_node(plan, spec, s + 1, propose(plan, node, seed, particle_id(c, j)), oracle);
        if (terminal)
          node = evaluate_node(plan, spec, m, advance(plan, m - 1, node.x, node.u, Vec::Zero(dim)), oracle);
        values.push_back(node.value);
        copies.push_back(std::move(node));
      }
      for (int s = b; s < e; ++s) r.per_step_consumption[static_cast<std::size_t>(s)] += k;
      spent += k * per_copy;

      StepTrace tr;
      tr.step = b;
      tr.chain = c;
      tr.proposals = k;
      tr.consumed = k * per_copy;
      tr.consumed_total = spent;
      tr.chain_budget = budgets[c];
      r.trace.push_back(tr);
      cur = std::move(copies[argmax_lowest(values)]);
    }
    r.offer(cur.x, cur.value);
  }
  finalize_result(r, oracle.calls() - calls_at_start, total_nfe);
  return r;
}

}  // namespace detail

/// Controlled decoding: every `interval` steps, k copies per chain, keep the
/// best value. Defaults: two chains, interval 2, k filling the budget.
template <class Oracle>
SearchResult run_code(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                      std::uint64_t seed, Oracle& oracle, const SamplerOptions& opt = {}) {
  return detail::blockwise_search(plan, spec, total_nfe, seed, oracle,
                                  opt.n > 0 ? static_cast<std::size_t>(opt.n) : 2, opt.k,
                                  opt.interval);
}

/// Value-guided greedy search: k proposals at every step, argmax value.
/// Defaults: two chains, k filling the budget.
template <class Oracle>
SearchResult run_svdd(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                      std::uint64_t seed, Oracle& oracle, const SamplerOptions& opt = {}) {
  return detail::blockwise_search(plan, spec, total_nfe, seed, oracle,
                                  opt.n > 0 ? static_cast<std::size_t>(opt.n) : 2, opt.k, 1);
}

}  // namespace flowsearch
