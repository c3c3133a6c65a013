#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowsearch {

/// Dense column vector used for latents, velocities and scores.
using Vec = Eigen::VectorXd;

/// Lower clamp on time for every score / SNR evaluation. 1/sigma_t and the
/// converted interpolant's scale are singular at t = 0.
inline constexpr double kTimeMin = 1e-3;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DegenerateWeightsError : public DomainError {
 public:
  using DomainError::DomainError;
};

class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration document names something unknown or is
/// malformed. `key()` is the offending key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline bool all_finite(const Vec& x) { return x.allFinite(); }

inline void require_finite(const Vec& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite input");
}

}  // namespace flowsearch
