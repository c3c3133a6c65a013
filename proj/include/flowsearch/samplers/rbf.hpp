#pragma once

#include "flowsearch/samplers/common.hpp"

namespace flowsearch {

/// Quota bookkeeping for budget rollover. Step i may spend up to quotas[i];
/// stopping early after j proposals passes quotas[i] - j on to step i + 1,
/// or to `forfeited` after the last step.
class RolloverLedger {
 public:
  RolloverLedger(std::vector<std::size_t> quotas, std::size_t init_charge)
      : quotas_(std::move(quotas)), consumed_(init_charge) {
    total_ = init_charge;
    for (std::size_t q : quotas_) total_ += q;
  }

  std::size_t quota(std::size_t i) const { return quotas_.at(i); }
  const std::vector<std::size_t>& quotas() const { return quotas_; }
  std::size_t consumed() const { return consumed_; }
  std::size_t forfeited() const { return forfeited_; }
  std::size_t total() const { return total_; }

  /// Sum of the quotas of steps after i.
  std::size_t remaining_after(std::size_t i) const {
    std::size_t s = 0;
    for (std::size_t k = i + 1; k < quotas_.size(); ++k) s += quotas_[k];
    return s;
  }

  /// Closes step i after `used` proposals.
  void close_step(std::size_t i, std::size_t used) {
    if (used > quotas_.at(i)) throw InvariantError("rollover: step overspent its quota");
    consumed_ += used;
    const std::size_t left = quotas_[i] - used;
    if (i + 1 < quotas_.size())
      quotas_[i + 1] += left;
    else
      forfeited_ += left;
    closed_ = i + 1;
  }

  /// consumed + quotas not yet spent + forfeited == total.
  bool conserved() const {
    std::size_t open = 0;
    for (std::size_t k = closed_; k < quotas_.size(); ++k) open += quotas_[k];
    return consumed_ + open + forfeited_ == total_;
  }

 private:
  std::vector<std::size_t> quotas_;
  std::size_t consumed_ = 0;
  std::size_t forfeited_ = 0;
  std::size_t total_ = 0;
  std::size_t closed_ = 0;
};

/// Rollover budget forcing. Each chain charges one NFE for the value of its
/// initial noise, which seeds the running best r*. Its remaining budget is
/// split uniformly over the stochastic steps. At step i proposals are drawn
/// in particle order; the first one whose value exceeds r* is taken, r* is
/// raised and the unspent quota rolls over. If none improves, the
/// highest-value proposal of the step is taken and r* is left unchanged.
/// Defaults to two chains sharing the budget.
template <class Oracle>
SearchResult run_rbf(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                     std::uint64_t seed, Oracle& oracle, const SamplerOptions& opt = {}) {
  const int m = plan.steps();
  const std::size_t calls_at_start = oracle.calls();
  const std::size_t n = chain_count(opt.n > 0 ? static_cast<std::size_t>(opt.n) : 2, total_nfe, m);
  const auto budgets = uniform_split(total_nfe, n);
  const auto dim = static_cast<Eigen::Index>(oracle.gmm().dim());
  const std::size_t stochastic = static_cast<std::size_t>(m - 1);

  SearchResult r;
  r.per_step_consumption.assign(static_cast<std::size_t>(m), 0);
  for (std::size_t c = 0; c < n; ++c) {
    Node cur = evaluate_node(plan, spec, 0, initial_noise(seed, c, dim), oracle);
    r.init_consumption += 1;
    double r_star = cur.value;
    RolloverLedger ledger(uniform_split(budgets[c] - 1, stochastic), 1);

    for (std::size_t i = 0; i < stochastic; ++i) {
      const std::size_t q = ledger.quota(i);
      std::vector<Node> tried;
      std::vector<double> values;
      std::size_t used = 0;
      bool improved = false;
      for (std::size_t j = 0; j < q; ++j) {
        Node child = evaluate_node(plan, spec, static_cast<int>(i) + 1,
                                   propose(plan, cur, seed, particle_id(c, j)), oracle);
        ++used;
        if (child.value > r_star) {
          r_star = child.value;
          cur = std::move(child);
          improved = true;
          break;
        }
        values.push_back(child.value);
        tried.push_back(std::move(child));
      }
      if (!improved) {
        if (tried.empty()) throw InvariantError("rbf: step without proposals");
        cur = std::move(tried[argmax_lowest(values)]);
      }
      ledger.close_step(i, used);
      r.per_step_consumption[i] += used;

      StepTrace tr;
      tr.step = static_cast<int>(i);
      tr.chain = c;
      tr.chain_budget = budgets[c];
      tr.quota = q;
      tr.consumed = used;
      tr.proposals = used;
      tr.improved = improved;
      tr.r_star = r_star;
      tr.consumed_total = ledger.consumed();
      tr.remaining_quota = ledger.remaining_after(i);
      tr.forfeited = ledger.forfeited();
      if (!ledger.conserved()) throw InvariantError("rbf: rollover conservation violated");
      r.trace.push_back(tr);
    }
    const Node end = evaluate_node(plan, spec, m, advance(plan, m - 1, cur.x, cur.u, Vec::Zero(dim)), oracle);
    r.offer(end.x, end.value);
  }
  finalize_result(r, oracle.calls() - calls_at_start, total_nfe);
  return r;
}

}  // namespace flowsearch
