#pragma once

// Shared pieces of the search algorithms: budgets, evaluated latents,
// selection helpers and the result record.

#include "flowsearch/analytic_flow.hpp"
#include "flowsearch/rewards.hpp"
#include "flowsearch/rng.hpp"
#include "flowsearch/sde_engine.hpp"
#include "flowsearch/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowsearch {

enum class SamplerKind { bon, sop, smc, code, svdd, rbf };

inline constexpr SamplerKind kAllSamplers[] = {SamplerKind::bon,  SamplerKind::sop,
                                              SamplerKind::smc,  SamplerKind::code,
                                              SamplerKind::svdd, SamplerKind::rbf};

inline std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::bon: return "bon";
    case SamplerKind::sop: return "sop";
    case SamplerKind::smc: return "smc";
    case SamplerKind::code: return "code";
    case SamplerKind::svdd: return "svdd";
    case SamplerKind::rbf: return "rbf";
  }
  return "?";
}

inline std::optional<SamplerKind> parse_sampler(std::string_view name) {
  for (SamplerKind k : kAllSamplers)
    if (sampler_name(k) == name) return k;
  return std::nullopt;
}

/// Tunables; zero means "use the sampler's default".
struct SamplerOptions {
  int n = 0;                   // chains / particles / batch size
  int k = 0;                   // proposals per selection
  int interval = 2;            // CoDe selection interval L
  int n_keep = 2;              // SoP survivors
  int sop_forward = 1;         // SoP forward-noising intervals; backward is one more
  double ess_threshold = 0.5;  // SMC, fraction of N
};

/// Splits `total` into `parts` near-equal shares, remainder to the earliest.
inline std::vector<std::size_t> uniform_split(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, parts ? total / parts : 0);
  for (std::size_t i = 0; parts && i < total % parts; ++i) ++out[i];
  return out;
}

struct SearchBudget {
  std::size_t total_nfe = 0;
  int steps = 1;
  std::vector<std::size_t> quotas;
  std::size_t consumed = 0;

  static SearchBudget uniform(std::size_t total, int steps) {
    if (steps < 1) throw BudgetError("budget: steps must be >= 1");
    return {total, steps, uniform_split(total, static_cast<std::size_t>(steps)), 0};
  }

  std::size_t remaining() const { return total_nfe - consumed; }

  void charge(std::size_t n = 1) {
    if (n > remaining()) throw BudgetError("budget: charge exceeds remaining NFE");
    consumed += n;
  }
};

/// Per-step record kept by the samplers that need one.
struct StepTrace {
  int step = 0;
  std::size_t quota = 0;        // RBF: quota available at this step
  std::size_t consumed = 0;     // NFE spent in this step
  std::size_t proposals = 0;    // proposals drawn
  bool improved = false;        // RBF: accepted a proposal above r*
  double r_star = 0.0;          // RBF: running best value after the step
  std::size_t consumed_total = 0;
  std::size_t remaining_quota = 0;  // RBF: sum of quotas of later steps
  std::size_t forfeited = 0;        // RBF: quota left over after the last step
  std::size_t chain = 0;
  std::size_t chain_budget = 0;     // RBF: NFE allotted to the chain, init included
  bool resampled = false;           // SMC
  double ess = 0.0;                 // SMC, before resampling
  std::vector<double> log_weights;  // SMC, after the step
};

struct SearchResult {
  Vec best_x;
  double best_reward = -std::numeric_limits<double>::infinity();
  std::size_t nfe_used = 0;
  std::size_t init_consumption = 0;
  std::vector<std::size_t> per_step_consumption;
  std::vector<Vec> final_candidates;
  std::vector<StepTrace> trace;

  void offer(const Vec& x, double reward) {
    final_candidates.push_back(x);
    if (reward > best_reward) {
      best_reward = reward;
      best_x = x;
    }
  }
};

/// A latent at grid point `index` with its velocity and value cached.
struct Node {
  Vec x;
  int index = 0;
  Vec u;
  Vec x0_hat;
  double value = 0.0;
};

/// Evaluates x at grid point i: one oracle call for i < steps, free at t = 0
/// where the value is the reward itself.
template <class Oracle>
Node evaluate_node(const StepPlan& plan, const RewardSpec& spec, int i, Vec x, Oracle& oracle) {
  Node n;
  n.index = i;
  if (i == plan.steps()) {
    n.x0_hat = x;
    n.value = evaluate_reward(spec, x);
    n.x = std::move(x);
    return n;
  }
  n.u = plan_velocity(plan, i, x, oracle);
  n.x0_hat = plan_posterior_mean(plan, i, x, n.u);
  n.value = evaluate_reward(spec, n.x0_hat);
  n.x = std::move(x);
  return n;
}

/// Oracle calls needed to evaluate a latent at grid point i.
inline std::size_t eval_cost(const StepPlan& plan, int i) { return i < plan.steps() ? 1 : 0; }

inline Vec initial_noise(std::uint64_t seed, std::uint64_t chain, Eigen::Index dim) {
  return normal_vector({seed, Stream::initial_noise, 0, chain}, dim);
}

/// Stream particle index for copy `copy` of chain `chain`.
inline std::uint64_t particle_id(std::size_t chain, std::size_t copy) {
  return (static_cast<std::uint64_t>(chain) << 32) | static_cast<std::uint64_t>(copy);
}

/// Child of `node` one grid interval later; the noise comes from the
/// (seed, step, particle) stream.
inline Vec propose(const StepPlan& plan, const Node& node, std::uint64_t seed,
                   std::uint64_t particle) {
  const StreamKey key{seed, Stream::proposal, static_cast<std::uint64_t>(node.index), particle};
  const bool noisy = plan.noise[static_cast<std::size_t>(node.index)] > 0.0;
  const Vec z = noisy ? normal_vector(key, node.x.size()) : Vec::Zero(node.x.size());
  return advance(plan, node.index, node.x, node.u, z);
}

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax_lowest(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("argmax: empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

/// Indices of the n largest values in descending value order; ties by index.
inline std::vector<std::size_t> top_n(const std::vector<double>& values, std::size_t n) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(std::min(n, idx.size()));
  return idx;
}

/// Number of chains that fit: min(requested, total / steps), at least one.
inline std::size_t chain_count(std::size_t requested, std::size_t total_nfe, int steps) {
  const std::size_t m = static_cast<std::size_t>(steps);
  if (total_nfe < m) throw BudgetError("budget: total NFE below the step count");
  return std::max<std::size_t>(1, std::min(requested, total_nfe / m));
}

/// Confirms the ledger against the oracle calls made during the search and
/// against the budget.
inline void finalize_result(SearchResult& r, std::size_t oracle_calls, std::size_t total_nfe) {
  r.nfe_used = r.init_consumption +
               std::accumulate(r.per_step_consumption.begin(), r.per_step_consumption.end(),
                               std::size_t{0});
  if (r.nfe_used != oracle_calls)
    throw InvariantError("search: NFE ledger disagrees with oracle calls");
  if (r.nfe_used > total_nfe) throw InvariantError("search: budget exceeded");
}

}  // namespace flowsearch
