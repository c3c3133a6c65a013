#pragma once

// Closed-form flow model for a diagonal Gaussian-mixture data distribution
// pushed through an interpolant with a standard-normal source. Supplies the
// marginal, its score, the generating velocity field and the posterior mean.

#include "flowsearch/interpolants.hpp"
#include "flowsearch/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

namespace flowsearch {

class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vec> means, std::vector<Vec> variances)
      : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
    if (weights_.empty()) throw DomainError("gmm: need at least one component");
    if (means_.size() != weights_.size() || variances_.size() != weights_.size())
      throw DomainError("gmm: weights, means and variances differ in length");
    dim_ = static_cast<std::size_t>(means_.front().size());
    if (dim_ == 0) throw DomainError("gmm: dimension must be positive");
    double total = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k] > 0.0)) throw DomainError("gmm: weights must be positive");
      if (static_cast<std::size_t>(means_[k].size()) != dim_ ||
          static_cast<std::size_t>(variances_[k].size()) != dim_)
        throw DomainError("gmm: component dimension mismatch");
      if (!means_[k].allFinite()) throw DomainError("gmm: non-finite mean");
      if (!(variances_[k].array() > 0.0).all() || !variances_[k].allFinite())
        throw DomainError("gmm: variances must be positive");
      total += weights_[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("gmm: weights must sum to 1");
  }

  /// Single Gaussian N(mean, diag(variance)).
  static GaussianMixture single(Vec mean, Vec variance) {
    return GaussianMixture({1.0}, {std::move(mean)}, {std::move(variance)});
  }

  /// 2-D benchmark prior: unit-variance modes at (+-4, +-4); three common
  /// modes share 0.97 and the (4, 4) mode carries the remaining 0.03.
  static GaussianMixture default_benchmark() {
    const double common = 0.97 / 3.0;
    std::vector<Vec> means;
    for (auto [a, b] : {std::pair{-4.0, -4.0}, {-4.0, 4.0}, {4.0, -4.0}, {4.0, 4.0}})
      means.push_back(Vec{{a, b}});
    std::vector<Vec> vars(4, Vec::Ones(2));
    return GaussianMixture({common, common, common, 1.0 - 3.0 * common}, std::move(means),
                           std::move(vars));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<Vec>& variances() const { return variances_; }

  /// Index of the lowest-weight component (first on ties).
  std::size_t rarest_component() const {
    return static_cast<std::size_t>(
        std::min_element(weights_.begin(), weights_.end()) - weights_.begin());
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> weights_;
  std::vector<Vec> means_;
  std::vector<Vec> variances_;
};

/// Parameters of p_t: component k is N(alpha_t mu_k, alpha_t^2 v_k + sigma_t^2).
struct MarginalParams {
  std::vector<double> weights;
  std::vector<Vec> means_t;
  std::vector<Vec> variances_t;
};

inline MarginalParams marginal_at(const GaussianMixture& gmm, const InterpolantSchedule& sched,
                                  double t) {
  const auto v = eval_schedule(sched, t);
  MarginalParams out{gmm.weights(), {}, {}};
  out.means_t.reserve(gmm.size());
  out.variances_t.reserve(gmm.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    out.means_t.push_back(v.alpha * gmm.means()[k]);
    out.variances_t.push_back(
        (v.alpha * v.alpha * gmm.variances()[k].array() + v.sigma * v.sigma).matrix());
  }
  return out;
}

/// Log-density of N(mean, diag(var)) at x.
inline double diag_gaussian_log_density(const Vec& x, const Vec& mean, const Vec& var) {
  const auto d = (x - mean).array();
  return -0.5 * ((d * d / var.array()).sum() + var.array().log().sum() +
                 static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

/// Posterior component responsibilities under p_t, via log-sum-exp.
inline std::vector<double> responsibilities(const GaussianMixture& gmm,
                                            const InterpolantSchedule& sched, double t,
                                            const Vec& x) {
  const auto v = eval_schedule(sched, t);
  std::vector<double> logp(gmm.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    const Vec var = (v.alpha * v.alpha * gmm.variances()[k].array() + v.sigma * v.sigma).matrix();
    logp[k] = std::log(gmm.weights()[k]) +
              diag_gaussian_log_density(x, v.alpha * gmm.means()[k], var);
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& lp : logp) total += (lp = std::exp(lp - top));
  for (double& lp : logp) lp /= total;
  return logp;
}

/// log p_t(x).
inline double log_marginal_density(const GaussianMixture& gmm, const InterpolantSchedule& sched,
                                   double t, const Vec& x) {
  const auto v = eval_schedule(sched, t);
  std::vector<double> logp(gmm.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    const Vec var = (v.alpha * v.alpha * gmm.variances()[k].array() + v.sigma * v.sigma).matrix();
    logp[k] = std::log(gmm.weights()[k]) +
              diag_gaussian_log_density(x, v.alpha * gmm.means()[k], var);
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double lp : logp) total += std::exp(lp - top);
  return top + std::log(total);
}

/// Exact gradient of log p_t at x.
inline Vec score_at(const GaussianMixture& gmm, const InterpolantSchedule& sched, double t,
                    const Vec& x) {
  require_finite(x, "score_at");
  if (static_cast<std::size_t>(x.size()) != gmm.dim()) throw DomainError("score_at: dimension");
  const auto v = eval_schedule(sched, t);
  const auto resp = responsibilities(gmm, sched, t, x);
  Vec score = Vec::Zero(x.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    const auto var = v.alpha * v.alpha * gmm.variances()[k].array() + v.sigma * v.sigma;
    score.array() -= resp[k] * (x - v.alpha * gmm.means()[k]).array() / var;
  }
  return score;
}

/// E[x0 | x_t = x], evaluated per component in closed form:
/// mu_k + alpha v_k (x - alpha mu_k) / (alpha^2 v_k + sigma^2).
/// Stable for every t in [0, 1]; at t = 0 it returns x.
inline Vec posterior_mean_direct(const GaussianMixture& gmm, const InterpolantSchedule& sched,
                                 double t, const Vec& x) {
  require_finite(x, "posterior_mean");
  if (static_cast<std::size_t>(x.size()) != gmm.dim())
    throw DomainError("posterior_mean: dimension");
  const auto v = eval_schedule(sched, t);
  if (v.sigma == 0.0) return x;
  const auto resp = responsibilities(gmm, sched, t, x);
  Vec mean = Vec::Zero(x.size());
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    const auto& mu = gmm.means()[k];
    const auto var_k = gmm.variances()[k].array();
    const auto gain = v.alpha * var_k / (v.alpha * v.alpha * var_k + v.sigma * v.sigma);
    mean.array() += resp[k] * (mu.array() + gain * (x - v.alpha * mu).array());
  }
  return mean;
}

/// Tweedie's formula from a score: (x + sigma^2 score) / alpha.
inline Vec tweedie_posterior_mean(const InterpolantSchedule& sched, double t, const Vec& x,
                                  const Vec& score) {
  const auto v = eval_schedule(sched, t);
  if (t == 0.0) return x;
  return (x + v.sigma * v.sigma * score) / v.alpha;
}

/// Posterior mean recovered from a velocity u evaluated at (x, t):
/// (sigma_dot x - sigma u) / (sigma_dot alpha - sigma alpha_dot).
inline Vec posterior_mean_from_velocity(const InterpolantSchedule& sched, double t, const Vec& x,
                                        const Vec& u) {
  if (t == 0.0) return x;
  const auto v = eval_schedule(sched, t);
  return (v.sigma_dot * x - v.sigma * u) / (v.sigma_dot * v.alpha - v.sigma * v.alpha_dot);
}

/// E[x0 | x_t = x] for t in [0, 1 - kTimeMin]; Tweedie on the analytic score.
inline Vec posterior_mean(const GaussianMixture& gmm, const InterpolantSchedule& sched, double t,
                          const Vec& x) {
  if (!(t >= 0.0 && t <= 1.0 - kTimeMin))
    throw DomainError("posterior_mean: t outside [0, 1 - t_min]");
  require_finite(x, "posterior_mean");
  if (t == 0.0) return x;
  return tweedie_posterior_mean(sched, t, x, score_at(gmm, sched, t, x));
}

/// Marginal velocity u_t(x) = alpha_dot E[x0|x] + sigma_dot E[x1|x] for
/// t in [kTimeMin, 1]. Written through the posterior mean so that it stays
/// finite at t = 1 where alpha vanishes.
inline Vec velocity_at(const GaussianMixture& gmm, const InterpolantSchedule& sched, double t,
                       const Vec& x) {
  if (!(t >= kTimeMin && t <= 1.0)) throw DomainError("velocity_at: t outside [t_min, 1]");
  const auto v = eval_schedule(sched, t);
  const Vec x0 = posterior_mean_direct(gmm, sched, t, x);
  return v.alpha_dot * x0 + v.sigma_dot * (x - v.alpha * x0) / v.sigma;
}

/// Velocity oracle over a fixed mixture and source interpolant. Every call
/// is one function evaluation (NFE); the counter is the NFE ledger.
class FlowModel {
 public:
  FlowModel(const GaussianMixture& gmm, InterpolantSchedule source = InterpolantSchedule::linear())
      : gmm_(&gmm), source_(source) {}

  Vec operator()(const Vec& x, double t) {
    ++calls_;
    return velocity_at(*gmm_, source_, t, x);
  }

  std::size_t calls() const { return calls_; }
  const GaussianMixture& gmm() const { return *gmm_; }
  const InterpolantSchedule& source() const { return source_; }

 private:
  const GaussianMixture* gmm_;
  InterpolantSchedule source_;
  std::size_t calls_ = 0;
};

}  // namespace flowsearch
