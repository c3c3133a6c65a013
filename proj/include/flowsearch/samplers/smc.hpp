#pragma once

#include "flowsearch/samplers/common.hpp"

#include <cmath>

namespace flowsearch {

/// Effective sample size (sum w)^2 / sum w^2.
inline double ess(const std::vector<double>& weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("ess: weights must be nonnegative");
    s += w;
    s2 += w * w;
  }
  if (s == 0.0) throw DegenerateWeightsError("ess: all weights are zero");
  return s * s / s2;
}

/// ESS from log-weights, shifted by the maximum before exponentiating.
inline double ess_from_log(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw DegenerateWeightsError("ess: no weights");
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) throw DegenerateWeightsError("ess: no finite log-weight");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  return ess(w);
}

/// n ancestor indices drawn from the normalized weights by inverse CDF;
/// draw j uses uniform j of `key`.
inline std::vector<std::size_t> resample_multinomial(const std::vector<double>& weights,
                                                     std::size_t n, const StreamKey& key) {
  if (weights.empty()) throw DegenerateWeightsError("resample: no weights");
  std::vector<double> cdf(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw DomainError("resample: weights must be nonnegative");
    cdf[i] = (total += weights[i]);
  }
  if (total == 0.0) throw DegenerateWeightsError("resample: all weights are zero");
  std::vector<std::size_t> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double u = uniform01(key, j) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    if (idx == cdf.size()) idx = cdf.size() - 1;
    // upper_bound can land on a zero-weight slot only through rounding at the top.
    while (weights[idx] == 0.0 && idx > 0) --idx;
    out[j] = idx;
  }
  return out;
}

/// Sequential Monte Carlo: total / steps particles, one proposal each per
/// step, log-weight update (v' - v) / beta, multinomial resampling with
/// weights reset to one when ESS drops below threshold * N.
template <class Oracle>
SearchResult run_smc(const StepPlan& plan, const RewardSpec& spec, std::size_t total_nfe,
                     std::uint64_t seed, Oracle& oracle, const SamplerOptions& opt = {}) {
  if (!(spec.kl_temperature > 0.0)) throw DomainError("smc: beta must be positive");
  const int m = plan.steps();
  const std::size_t calls_at_start = oracle.calls();
  const std::size_t requested = opt.n > 0 ? static_cast<std::size_t>(opt.n) : total_nfe;
  const std::size_t n = chain_count(requested, total_nfe, m);
  const auto dim = static_cast<Eigen::Index>(oracle.gmm().dim());
  const double beta = spec.kl_temperature;

  SearchResult r;
  r.per_step_consumption.assign(static_cast<std::size_t>(m), 0);
  std::vector<Node> particles;
  particles.reserve(n);
  for (std::size_t p = 0; p < n; ++p)
    particles.push_back(evaluate_node(plan, spec, 0, initial_noise(seed, p, dim), oracle));
  r.init_consumption = n;
  std::vector<double> logw(n, 0.0);

  for (int i = 0; i + 1 < m; ++i) {
    std::vector<Node> next;
    next.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
      next.push_back(evaluate_node(plan, spec, i + 1, propose(plan, particles[p], seed, p), oracle));
      logw[p] += (next[p].value - particles[p].value) / beta;
    }
    r.per_step_consumption[static_cast<std::size_t>(i)] = n;

    StepTrace tr;
    tr.step = i;
    tr.consumed = n;
    tr.proposals = n;
    tr.ess = ess_from_log(logw);
    if (tr.ess < opt.ess_threshold * static_cast<double>(n)) {
      const double top = *std::max_element(logw.begin(), logw.end());
      std::vector<double> w(n);
      for (std::size_t p = 0; p < n; ++p) w[p] = std::exp(logw[p] - top);
      const auto anc = resample_multinomial(w, n, {seed, Stream::resample, static_cast<std::uint64_t>(i), 0});
      std::vector<Node> picked;
      picked.reserve(n);
      for (std::size_t a : anc) picked.push_back(next[a]);
      next = std::move(picked);
      std::fill(logw.begin(), logw.end(), 0.0);
      tr.resampled = true;
    }
    tr.log_weights = logw;
    r.trace.push_back(std::move(tr));
    particles = std::move(next);
  }

  for (const Node& p : particles) {
    const Node end = evaluate_node(plan, spec, m, advance(plan, m - 1, p.x, p.u, Vec::Zero(p.x.size())), oracle);
    r.offer(end.x, end.value);
  }
  finalize_result(r, oracle.calls() - calls_at_start, total_nfe);
  return r;
}

}  // namespace flowsearch
