#pragma once

// Rewards on data space, the posterior-mean value estimate and reward
// guidance for differentiable rewards.

#include "flowsearch/analytic_flow.hpp"
#include "flowsearch/interpolants.hpp"
#include "flowsearch/sde_engine.hpp"
#include "flowsearch/types.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace flowsearch {

enum class RewardKind { target_point, rare_mode, ring };

inline std::string reward_kind_name(RewardKind k) {
  switch (k) {
    case RewardKind::target_point: return "target-point";
    case RewardKind::rare_mode: return "rare-mode";
    case RewardKind::ring: return "ring";
  }
  return "?";
}

inline std::optional<RewardKind> parse_reward_kind(std::string_view name) {
  for (RewardKind k : {RewardKind::target_point, RewardKind::rare_mode, RewardKind::ring})
    if (reward_kind_name(k) == name) return k;
  return std::nullopt;
}

struct RewardSpec {
  RewardKind kind = RewardKind::rare_mode;
  Vec target;                // target-point
  Vec rare_mean;             // rare-mode: the designated component
  Vec rare_variance;
  double radius = 1.0;       // ring
  double width = 1.0;
  double kl_temperature = 0.1;

  static RewardSpec target_point(Vec mu, double beta = 0.1) {
    RewardSpec s;
    s.kind = RewardKind::target_point;
    s.target = std::move(mu);
    s.kl_temperature = beta;
    return s;
  }

  /// Log-density of component `k` of `gmm`; defaults to its lowest-weight one.
  static RewardSpec rare_mode(const GaussianMixture& gmm, std::optional<std::size_t> k = {},
                              double beta = 0.1) {
    const std::size_t idx = k.value_or(gmm.rarest_component());
    if (idx >= gmm.size()) throw DomainError("rare-mode reward: component index out of range");
    RewardSpec s;
    s.kind = RewardKind::rare_mode;
    s.rare_mean = gmm.means()[idx];
    s.rare_variance = gmm.variances()[idx];
    s.kl_temperature = beta;
    return s;
  }

  static RewardSpec ring(double radius, double width = 1.0, double beta = 0.1) {
    if (!(width > 0.0)) throw DomainError("ring reward: width must be positive");
    RewardSpec s;
    s.kind = RewardKind::ring;
    s.radius = radius;
    s.width = width;
    s.kl_temperature = beta;
    return s;
  }
};

inline double evaluate_reward(const RewardSpec& spec, const Vec& x) {
  require_finite(x, "evaluate_reward");
  switch (spec.kind) {
    case RewardKind::target_point:
      return -(x - spec.target).squaredNorm();
    case RewardKind::rare_mode:
      return diag_gaussian_log_density(x, spec.rare_mean, spec.rare_variance);
    case RewardKind::ring: {
      const double d = (x.norm() - spec.radius) / spec.width;
      return -d * d;
    }
  }
  return 0.0;
}

struct ValueEstimate {
  double value = 0.0;
  Vec posterior_mean;
  int nfe_charged = 0;
};

/// v(x_t) ~ r(E[x0 | x_t]). `already_paid` marks that the caller has spent
/// the velocity evaluation for this latent, in which case the value is free.
inline ValueEstimate estimate_value(const RewardSpec& spec, const GaussianMixture& gmm,
                                    const InterpolantSchedule& sched, double t, const Vec& x_t,
                                    bool already_paid = false) {
  ValueEstimate out;
  out.posterior_mean = posterior_mean(gmm, sched, t, x_t);
  out.value = evaluate_reward(spec, out.posterior_mean);
  out.nfe_charged = (already_paid || t == 0.0) ? 0 : 1;
  return out;
}

/// Score of the reward-tilted marginal, grad log p_t + (1/beta) grad_x r(E[x0|x]).
/// The reward gradient is taken by central differences with step 1e-4.
inline Vec guided_score(const RewardSpec& spec, const GaussianMixture& gmm,
                        const InterpolantSchedule& sched, double t, const Vec& x) {
  if (!(t >= kTimeMin && t <= 1.0 - kTimeMin))
    throw DomainError("guided_score: t outside [t_min, 1 - t_min]");
  if (!(spec.kl_temperature > 0.0)) throw DomainError("guided_score: beta must be positive");
  constexpr double h = 1e-4;
  Vec grad(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = evaluate_reward(spec, posterior_mean(gmm, sched, t, probe));
    probe[i] = x[i] - h;
    const double down = evaluate_reward(spec, posterior_mean(gmm, sched, t, probe));
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return score_at(gmm, sched, t, x) + grad / spec.kl_temperature;
}

/// Reverse-SDE drift with the guided score in place of the plain one; g is
/// left unchanged.
inline Vec guided_drift(const RewardSpec& spec, const GaussianMixture& gmm,
                        const InterpolantSchedule& sched, const DiffusionCoefficient& diffusion,
                        double t, const Vec& x, const Vec& u) {
  const double g = diffusion(t);
  return u - 0.5 * g * g * guided_score(spec, gmm, sched, t, x);
}

}  // namespace flowsearch
