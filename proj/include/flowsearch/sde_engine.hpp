#pragma once

// Generative processes driven by a velocity oracle: the probability-flow ODE,
// the reverse SDE with matching marginals, sampling through a converted
// interpolant, and the ablation step modes.

#include "flowsearch/interpolants.hpp"
#include "flowsearch/rng.hpp"
#include "flowsearch/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowsearch {

/// g(t) = norm * t^exponent.
struct DiffusionCoefficient {
  double norm = 3.0;
  double exponent = 2.0;

  double operator()(double t) const {
    if (!(norm >= 0.0) || !(exponent >= 0.0))
      throw DomainError("diffusion coefficient: norm and exponent must be nonnegative");
    return norm * std::pow(t, exponent);
  }
};

enum class Process {
  linear_ode,
  linear_sde,
  linear_sde_adaptive_time,
  linear_sde_scaled_diffusion,
  vp_sde,
};

inline constexpr std::array<Process, 5> kAllProcesses = {
    Process::linear_ode, Process::linear_sde, Process::linear_sde_adaptive_time,
    Process::linear_sde_scaled_diffusion, Process::vp_sde};

inline std::string process_name(Process p) {
  switch (p) {
    case Process::linear_ode: return "linear-ode";
    case Process::linear_sde: return "linear-sde";
    case Process::linear_sde_adaptive_time: return "linear-sde-adaptive-time";
    case Process::linear_sde_scaled_diffusion: return "linear-sde-scaled-diffusion";
    case Process::vp_sde: return "vp-sde";
  }
  return "?";
}

inline std::optional<Process> parse_process(std::string_view name) {
  for (Process p : kAllProcesses)
    if (process_name(p) == name) return p;
  return std::nullopt;
}

enum class GridMode { uniform, adaptive };

inline std::optional<GridMode> parse_grid_mode(std::string_view name) {
  if (name == "uniform") return GridMode::uniform;
  if (name == "adaptive") return GridMode::adaptive;
  return std::nullopt;
}

/// steps + 1 decreasing times from 1 to 0. The adaptive grid maps each
/// uniform point through t -> sqrt(1 - (1 - t)^2).
inline std::vector<double> make_time_grid(int steps, GridMode mode = GridMode::uniform) {
  if (steps < 1) throw DomainError("make_time_grid: steps must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(steps - i) / steps;
    grid[static_cast<std::size_t>(i)] =
        mode == GridMode::uniform ? t : std::sqrt(1.0 - (1.0 - t) * (1.0 - t));
  }
  grid.front() = 1.0;
  grid.back() = 0.0;
  return grid;
}

struct PlanOptions {
  Process process = Process::linear_sde;
  int steps = 10;
  GridMode grid = GridMode::uniform;
  DiffusionCoefficient diffusion{};
  InterpolantSchedule source = InterpolantSchedule::linear();
  // Interpolant the vp-sde process samples through (and the one whose
  // log-SNR defines the two linear ablation modes).
  InterpolantSchedule converted = InterpolantSchedule::vp();
};

/// Everything needed to advance a latent: the interpolant it lives on, the
/// time grid and the diffusion coefficient actually applied per interval.
struct StepPlan {
  Process process = Process::linear_sde;
  InterpolantSchedule src;
  InterpolantSchedule dst;
  DiffusionCoefficient diffusion;
  std::vector<double> grid;
  std::vector<double> noise;  // g used on interval i; the last entry is 0

  int steps() const { return static_cast<int>(grid.size()) - 1; }
  double dt(int i) const { return grid[i] - grid[i + 1]; }
  bool stochastic() const {
    for (double g : noise)
      if (g > 0.0) return true;
    return false;
  }
};

inline StepPlan make_plan(const PlanOptions& opt) {
  StepPlan plan;
  plan.process = opt.process;
  plan.src = opt.source;
  plan.dst = opt.source;
  plan.diffusion = opt.diffusion;
  const std::vector<double> base = make_time_grid(opt.steps, opt.grid);
  const std::size_t m = base.size() - 1;

  // Source-schedule times matched in log-SNR to the base grid.
  auto matched = [&] {
    std::vector<double> ts(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      ts[i] = scale_time_transform(opt.source, opt.converted, base[i]).t_s;
    return ts;
  };

  plan.grid = base;
  plan.noise.assign(m, 0.0);
  switch (opt.process) {
    case Process::linear_ode:
      break;
    case Process::linear_sde:
      for (std::size_t i = 0; i < m; ++i) plan.noise[i] = opt.diffusion(base[i]);
      break;
    case Process::vp_sde:
      plan.dst = opt.converted;
      for (std::size_t i = 0; i < m; ++i) plan.noise[i] = opt.diffusion(base[i]);
      break;
    case Process::linear_sde_adaptive_time: {
      plan.grid = matched();
      plan.grid.front() = 1.0;
      for (std::size_t i = 0; i < m; ++i) plan.noise[i] = opt.diffusion(plan.grid[i]);
      break;
    }
    case Process::linear_sde_scaled_diffusion: {
      const auto ts = matched();
      for (std::size_t i = 0; i < m; ++i) {
        const double c = scale_time_transform(opt.source, opt.converted, base[i]).c_s;
        const double ds = base[i] - base[i + 1];
        const double dts = ts[i] - ts[i + 1];
        plan.noise[i] = opt.diffusion(base[i]) / c * std::sqrt(ds / dts);
      }
      break;
    }
  }
  plan.noise.back() = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (!(plan.grid[i] > plan.grid[i + 1])) throw InvariantError("make_plan: grid not decreasing");
  return plan;
}

inline StepPlan make_plan(Process process, int steps, GridMode grid = GridMode::uniform) {
  PlanOptions opt;
  opt.process = process;
  opt.steps = steps;
  opt.grid = grid;
  return make_plan(opt);
}

struct TrajectoryState {
  Vec x;
  double t = 1.0;
  std::size_t nfe_used = 0;
};

/// Score of the interpolant's marginal recovered from its velocity:
/// (alpha u - alpha_dot x) / (sigma (alpha_dot sigma - alpha sigma_dot)).
inline Vec score_from_velocity(const InterpolantSchedule& sched, double t, const Vec& x,
                               const Vec& u) {
  if (!(t >= kTimeMin && t <= 1.0))
    throw DomainError("score_from_velocity: t outside [t_min, 1]");
  const auto v = eval_schedule(sched, t);
  return (v.alpha * u - v.alpha_dot * x) / (v.sigma * (v.alpha_dot * v.sigma - v.alpha * v.sigma_dot));
}

/// Reverse-SDE drift u - g^2/2 * score.
inline Vec drift(const InterpolantSchedule& sched, const DiffusionCoefficient& diffusion, double t,
                 const Vec& x, const Vec& u) {
  const double g = diffusion(t);
  if (g == 0.0) return u;
  return u - 0.5 * g * g * score_from_velocity(sched, t, x, u);
}

inline TrajectoryState ode_step(const TrajectoryState& state, double dt, const Vec& u) {
  if (!(dt >= 0.0) || dt > state.t) throw DomainError("ode_step: dt outside [0, t]");
  return {state.x - u * dt, state.t - dt, state.nfe_used + 1};
}

/// Euler-Maruyama step of the reverse SDE with g taken at the current time.
inline TrajectoryState sde_step(const TrajectoryState& state, double dt, const Vec& u, const Vec& z,
                                const DiffusionCoefficient& diffusion,
                                const InterpolantSchedule& sched) {
  if (!(dt >= 0.0) || dt > state.t) throw DomainError("sde_step: dt outside [0, t]");
  const double g = diffusion(state.t);
  if (g == 0.0) return ode_step(state, dt, u);
  const Vec f = drift(sched, diffusion, state.t, state.x, u);
  return {state.x - f * dt + g * std::sqrt(dt) * z, state.t - dt, state.nfe_used + 1};
}

/// Velocity of `dst` at (x_bar, s) built from one query of a velocity field
/// trained on `src`: (c_dot / c) x_bar + c t_dot u(x_bar / c, t_s).
template <class Query>
Vec transform_velocity(const InterpolantSchedule& src, const InterpolantSchedule& dst, double s,
                       const Vec& x_bar, Query&& query) {
  const ScaleTimeMap map = scale_time_transform(src, dst, s);
  if (src == dst) return query(x_bar, s);
  const Vec u = query(Vec(x_bar / map.c_s), map.t_s);
  return (map.c_dot / map.c_s) * x_bar + (map.c_s * map.t_dot) * u;
}

/// Velocity of the plan's interpolant at grid point i; one oracle call.
template <class Oracle>
Vec plan_velocity(const StepPlan& plan, int i, const Vec& x, Oracle& oracle) {
  const double t = std::max(plan.grid[i], kTimeMin);
  return transform_velocity(plan.src, plan.dst, t, x, oracle);
}

/// Posterior mean of x0 given the latent at grid point i and its velocity.
inline Vec plan_posterior_mean(const StepPlan& plan, int i, const Vec& x, const Vec& u) {
  const double t = std::max(plan.grid[i], kTimeMin);
  const auto v = eval_schedule(plan.dst, t);
  return (v.sigma_dot * x - v.sigma * u) / (v.sigma_dot * v.alpha - v.sigma * v.alpha_dot);
}

/// Advances x from grid point i to i + 1 given its velocity u. No oracle
/// call; `z` is ignored on noiseless intervals.
inline Vec advance(const StepPlan& plan, int i, const Vec& x, const Vec& u, const Vec& z) {
  const double dt = plan.dt(i);
  const double g = plan.noise[static_cast<std::size_t>(i)];
  if (g == 0.0) return x - u * dt;
  const double t = std::max(plan.grid[i], kTimeMin);
  const Vec f = u - 0.5 * g * g * score_from_velocity(plan.dst, t, x, u);
  return x - f * dt + g * std::sqrt(dt) * z;
}

/// One denoising step: query the velocity at the state's grid point, then
/// take the plan's Euler or Euler-Maruyama step. Exactly one NFE.
template <class Oracle>
TrajectoryState stoch_denoise(const StepPlan& plan, int i, const TrajectoryState& state,
                              const Vec& z, Oracle& oracle) {
  if (i < 0 || i >= plan.steps()) throw DomainError("stoch_denoise: step index out of range");
  const Vec u = plan_velocity(plan, i, state.x, oracle);
  return {advance(plan, i, state.x, u, z), plan.grid[i + 1], state.nfe_used + 1};
}

struct ProcessOutput {
  Vec x0;
  std::size_t nfe = 0;
};

/// Integrates x1 from t = 1 to 0. Noise for step i is drawn from
/// `key.with(i, key.particle)`.
template <class Oracle>
ProcessOutput run_process(const StepPlan& plan, const Vec& x1, const StreamKey& key,
                          Oracle& oracle) {
  TrajectoryState state{x1, 1.0, 0};
  for (int i = 0; i < plan.steps(); ++i) {
    const bool noisy = plan.noise[static_cast<std::size_t>(i)] > 0.0;
    const Vec z = noisy ? normal_vector(key.with(static_cast<std::uint64_t>(i), key.particle), x1.size())
                        : Vec::Zero(x1.size());
    state = stoch_denoise(plan, i, state, z, oracle);
  }
  return {state.x, state.nfe_used};
}

/// Endpoints of `k` branches that share x1, take independent noise on the
/// first step only and are then completed without noise. Costs
/// 1 + k (steps - 1) oracle calls.
template <class Oracle>
std::vector<Vec> branched_endpoints(const StepPlan& plan, const Vec& x1, const StreamKey& key,
                                    int k, Oracle& oracle) {
  const Vec u0 = plan_velocity(plan, 0, x1, oracle);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int b = 0; b < k; ++b) {
    Vec x = advance(plan, 0, x1, u0, normal_vector(key.with(0, static_cast<std::uint64_t>(b)), x1.size()));
    for (int i = 1; i < plan.steps(); ++i) x -= plan_velocity(plan, i, x, oracle) * plan.dt(i);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace flowsearch
