#ifndef GPCBF_TYPES_HPP
#define GPCBF_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpcbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A joint state-input point z = (x, u), the domain of the dynamics GP.
struct StateInput {
  Vec x;
  Vec u;
};

// One derivative observation: y ≈ xdot at z, one noisy value per state dimension.
struct Measurement {
  StateInput z;
  Vec y;
};

// Axis-aligned input constraint set U = [lower, upper].
struct InputBox {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& u, double tol = 0.0) const {
    return (u.array() >= lower.array() - tol).all() &&
           (u.array() <= upper.array() + tol).all();
  }
  Vec center() const { return 0.5 * (lower + upper); }
  Vec clamp(const Vec& u) const {
    return u.cwiseMax(lower).cwiseMin(upper);
  }
};

// Axis-aligned state domain X, used for sampling and domain checks.
struct StateBox {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x, double tol = 0.0) const {
    return (x.array() >= lower.array() - tol).all() &&
           (x.array() <= upper.array() + tol).all();
  }
};

// Caller broke a precondition (dimension mismatch, invalid argument ranges).
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numerical routine could not deliver its contract (non-PD factorization,
// iteration limit, variance clamp breach). what() carries diagnostics.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dynamics evaluated outside their valid domain.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration input.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace gpcbf

#endif  // GPCBF_TYPES_HPP
