#pragma once

#include "flowsearch/samplers/common.hpp"

namespace flowsearch {

/// Exact draw of x_{t_to} given x_{t_from} = x under the interpolant's
/// forward kernel (t_to >= t_from). At t_to = 1 on the linear path this
/// forgets x completely.
inline Vec forward_kernel(const InterpolantSchedule& sched, double t_from, double t_to,
                          const Vec& x, const Vec& z) {
  if (!(t_to >= t_from)) throw DomainError("forward_kernel: target time precedes source");
  const auto a = eval_schedule(sched, t_from);
  const auto b = eval_schedule(sched, t_to);
  if (a.alpha == 0.0) throw DomainError("forward_kernel: source time carries no signal");
  const double ratio = b.alpha / a.alpha;
  const double var = std::max(0.0, b.sigma * b.sigma - ratio * ratio * a.sigma * a.sigma);
  return ratio * x + std::sqrt(var) * z;
}

/// Search over paths with noiseless dynamics between branch points.
///
/// Round 0 draws n_keep * k noises, takes one step from each and keeps the
/// n_keep best landings. Every later round starts from the survivors at
/// grid point i: each is re-noised `sop_forward` intervals back toward t = 1
/// k times, integrated forward to grid point i + 1 and the n_keep best
/// landings survive. If a round would not leave room to finish the
/// survivors, the search stops and they are completed without branching.
template <class Oracle>
SearchResult search_over_paths(const StepPlan& plan_in, const RewardSpec& spec,
                               std::size_t total_nfe, std::uint64_t seed, Oracle& oracle,
                               const SamplerOptions& opt = {}) {
  StepPlan plan = plan_in;
  std::fill(plan.noise.begin(), plan.noise.end(), 0.0);
  const int m = plan.steps();
  const std::size_t calls_at_start = oracle.calls();
  const std::size_t n_keep =
      chain_count(opt.n_keep > 0 ? static_cast<std::size_t>(opt.n_keep) : 2, total_nfe, m);
  const std::size_t k = opt.k > 0 ? static_cast<std::size_t>(opt.k) : 5;
  const int forward = opt.sop_forward;
  if (forward < 0) throw DomainError("sop: forward interval count must be >= 0");
  const auto dim = static_cast<Eigen::Index>(oracle.gmm().dim());

  SearchResult r;
  r.per_step_consumption.assign(static_cast<std::size_t>(m), 0);
  std::size_t spent = 0;
  // Evaluations to take a cached survivor at grid point i to t = 0.
  auto finish_cost = [&](int i) { return static_cast<std::size_t>(std::max(0, m - 1 - i)); };

  // Round 0.
  std::size_t pool = n_keep * k;
  while (pool > n_keep &&
         pool * (1 + eval_cost(plan, 1)) + n_keep * finish_cost(1) > total_nfe)
    --pool;
  std::vector<Node> landed;
  std::vector<double> values;
  for (std::size_t p = 0; p < pool; ++p) {
    const Node start = evaluate_node(plan, spec, 0, initial_noise(seed, p, dim), oracle);
    landed.push_back(evaluate_node(plan, spec, 1, propose(plan, start, seed, p), oracle));
    values.push_back(landed.back().value);
  }
  r.init_consumption = pool;
  r.per_step_consumption[0] = pool * eval_cost(plan, 1);
  spent = pool * (1 + eval_cost(plan, 1));
  std::vector<Node> survivors;
  for (std::size_t idx : top_n(values, n_keep)) survivors.push_back(landed[idx]);
  {
    StepTrace tr;
    tr.step = 0;
    tr.proposals = pool;
    tr.consumed = spent;
    tr.consumed_total = spent;
    r.trace.push_back(tr);
  }

  int i = 1;
  for (; i < m; ++i) {
    const int from = std::max(i - forward, 0);
    const std::size_t branch_cost =
        (forward == 0 ? 0 : static_cast<std::size_t>(i - from + 1)) + eval_cost(plan, i + 1);
    const std::size_t round_cost = survivors.size() * k * branch_cost;
    const std::size_t keep_after = std::min(n_keep, survivors.size() * k);
    if (spent + round_cost + keep_after * finish_cost(i + 1) > total_nfe) break;

    landed.clear();
    values.clear();
    for (std::size_t q = 0; q < survivors.size(); ++q) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::uint64_t id = particle_id(q, j);
        Node node = survivors[q];
        if (forward > 0) {
          const StreamKey key{seed, Stream::forward_noise, static_cast<std::uint64_t>(i), id};
          Vec x = forward_kernel(plan.dst, plan.grid[i], plan.grid[from], node.x,
                                 normal_vector(key, dim));
          node = evaluate_node(plan, spec, from, std::move(x), oracle);
          for (int s = from; s < i; ++s)
            node = evaluate_node(plan, spec, s + 1, propose(plan, node, seed, id), oracle);
        }
        node = evaluate_node(plan, spec, i + 1, propose(plan, node, seed, id), oracle);
        values.push_back(node.value);
        landed.push_back(std::move(node));
      }
    }
    r.per_step_consumption[static_cast<std::size_t>(i)] += round_cost;
    spent += round_cost;
    survivors.clear();
    for (std::size_t idx : top_n(values, n_keep)) survivors.push_back(landed[idx]);

    StepTrace tr;
    tr.step = i;
    tr.proposals = landed.size();
    tr.consumed = round_cost;
    tr.consumed_total = spent;
    r.trace.push_back(tr);
  }

  // Survivors at grid point i; finish without branching if the search stopped early.
  for (Node& node : survivors) {
    for (int s = node.index; s < m; ++s) {
      node = evaluate_node(plan, spec, s + 1, propose(plan, node, seed, 0), oracle);
      r.per_step_consumption[static_cast<std::size_t>(s)] += eval_cost(plan, s + 1);
    }
    r.offer(node.x, node.value);
  }
  finalize_result(r, oracle.calls() - calls_at_start, total_nfe);
  return r;
}

}  // namespace flowsearch
