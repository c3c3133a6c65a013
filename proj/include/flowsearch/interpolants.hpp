#pragma once

// Interpolant schedules x_t = alpha_t x0 + sigma_t x1, their signal-to-noise
// utilities and the scale-time map that re-expresses one interpolant's path
// in terms of another's.

#include "flowsearch/types.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace flowsearch {

enum class ScheduleKind { linear, vp };

struct InterpolantSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  // Affine variance schedule beta(s) = beta_min + (beta_max - beta_min) s.
  // Only read for the VP kind.
  double vp_beta_min = 0.1;
  double vp_beta_max = 20.0;

  static InterpolantSchedule linear() { return {}; }
  static InterpolantSchedule vp(double beta_min = 0.1, double beta_max = 20.0) {
    if (!(beta_min > 0.0) || !(beta_max >= beta_min))
      throw DomainError("vp schedule: need 0 < beta_min <= beta_max");
    return {ScheduleKind::vp, beta_min, beta_max};
  }

  friend bool operator==(const InterpolantSchedule& a, const InterpolantSchedule& b) {
    if (a.kind != b.kind) return false;
    return a.kind == ScheduleKind::linear ||
           (a.vp_beta_min == b.vp_beta_min && a.vp_beta_max == b.vp_beta_max);
  }
};

inline std::string schedule_name(const InterpolantSchedule& s) {
  return s.kind == ScheduleKind::linear ? "linear" : "vp";
}

struct ScheduleValues {
  double alpha;
  double sigma;
  double alpha_dot;
  double sigma_dot;
};

namespace detail {

inline void require_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(what) + ": t outside [0, 1]");
}

// Integral of beta over [0, t] for the affine schedule.
inline double vp_integral(const InterpolantSchedule& s, double t) {
  return s.vp_beta_min * t + 0.5 * (s.vp_beta_max - s.vp_beta_min) * t * t;
}

inline double vp_beta(const InterpolantSchedule& s, double t) {
  return s.vp_beta_min + (s.vp_beta_max - s.vp_beta_min) * t;
}

inline ScheduleValues eval_unchecked(const InterpolantSchedule& s, double t) {
  if (s.kind == ScheduleKind::linear) return {1.0 - t, t, -1.0, 1.0};
  const double integral = vp_integral(s, t);
  const double beta = vp_beta(s, t);
  const double alpha = std::exp(-0.5 * integral);
  const double one_minus_alpha_sq = -std::expm1(-integral);
  const double sigma = std::sqrt(one_minus_alpha_sq);
  // sigma_dot diverges at t = 0; IEEE division yields +inf there.
  const double sigma_dot = 0.5 * beta * alpha * alpha / sigma;
  return {alpha, sigma, -0.5 * beta * alpha, sigma_dot};
}

// log(alpha^2 / sigma^2) without the clamp check.
inline double log_snr_unchecked(const InterpolantSchedule& s, double t) {
  if (s.kind == ScheduleKind::linear) return 2.0 * (std::log1p(-t) - std::log(t));
  const double integral = vp_integral(s, t);
  return -integral - std::log(-std::expm1(-integral));
}

// alpha / sigma
inline double snr_ratio_unchecked(const InterpolantSchedule& s, double t) {
  const auto v = eval_unchecked(s, t);
  return v.alpha / v.sigma;
}

}  // namespace detail

/// alpha, sigma and their time derivatives at t in [0, 1]. For VP the
/// derivative of sigma is +inf at t = 0.
inline ScheduleValues eval_schedule(const InterpolantSchedule& sched, double t) {
  detail::require_unit_interval(t, "eval_schedule");
  return detail::eval_unchecked(sched, t);
}

/// log(alpha_t^2 / sigma_t^2) on [kTimeMin, 1 - kTimeMin]; strictly decreasing.
inline double log_snr(const InterpolantSchedule& sched, double t) {
  if (!(t >= kTimeMin && t <= 1.0 - kTimeMin))
    throw DomainError("log_snr: t outside [t_min, 1 - t_min]");
  return detail::log_snr_unchecked(sched, t);
}

/// alpha_t / sigma_t on [kTimeMin, 1].
inline double snr_ratio(const InterpolantSchedule& sched, double t) {
  if (!(t >= kTimeMin && t <= 1.0))
    throw DomainError("snr_ratio: t outside [t_min, 1]");
  return detail::snr_ratio_unchecked(sched, t);
}

/// Time t in [kTimeMin, 1] with alpha_t / sigma_t == ratio.
///
/// Linear is inverted in closed form. VP is bisected on log-SNR (the schedule
/// stays swappable that way) to 1e-12 in t with a hard cap of 200 halvings.
inline double snr_time_inverse(const InterpolantSchedule& sched, double ratio) {
  const double lo_ratio = detail::snr_ratio_unchecked(sched, 1.0);
  const double hi_ratio = detail::snr_ratio_unchecked(sched, kTimeMin);
  if (!(ratio >= lo_ratio && ratio <= hi_ratio))
    throw DomainError("snr_time_inverse: ratio outside attainable range");
  if (sched.kind == ScheduleKind::linear) return 1.0 / (1.0 + ratio);

  if (ratio == lo_ratio) return 1.0;
  const double target = 2.0 * std::log(ratio);
  double lo = kTimeMin;  // log-SNR above target
  double hi = 1.0;       // log-SNR below target
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (detail::log_snr_unchecked(sched, mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Fields of the map x_bar_s = c_s x_{t_s} between a source interpolant and a
/// target one, together with d t_s/ds and d c_s/ds.
struct ScaleTimeMap {
  double t_s;
  double c_s;
  double t_dot;
  double c_dot;

  bool is_identity() const { return c_s == 1.0 && t_dot == 1.0 && c_dot == 0.0; }
};

/// Scale-time map from `src` (the interpolant the velocity was trained on) to
/// `dst` at target time s in [kTimeMin, 1]. Identical schedules give the exact
/// identity map.
inline ScaleTimeMap scale_time_transform(const InterpolantSchedule& src,
                                         const InterpolantSchedule& dst, double s) {
  if (!(s >= kTimeMin && s <= 1.0))
    throw DomainError("scale_time_transform: s outside [t_min, 1]");
  if (src == dst) return {s, 1.0, 1.0, 0.0};

  const auto bar = detail::eval_unchecked(dst, s);
  const double t_s = snr_time_inverse(src, bar.alpha / bar.sigma);
  const auto v = detail::eval_unchecked(src, t_s);

  const double c_s = bar.sigma / v.sigma;
  const double t_dot = v.sigma * v.sigma * (bar.sigma * bar.alpha_dot - bar.alpha * bar.sigma_dot) /
                       (bar.sigma * bar.sigma * (v.sigma * v.alpha_dot - v.alpha * v.sigma_dot));
  const double c_dot = (v.sigma * bar.sigma_dot - bar.sigma * v.sigma_dot * t_dot) / (v.sigma * v.sigma);
  return {t_s, c_s, t_dot, c_dot};
}

}  // namespace flowsearch
