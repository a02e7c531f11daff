#ifndef GPCBF_THEORY_HPP
#define GPCBF_THEORY_HPP

#include <cstdint>
#include <functional>
#include <optional>

#include "gpcbf/confidence.hpp"
#include "gpcbf/types.hpp"

namespace gpcbf {

// Kernel-dependent information-gain growth bound gamma_N <= c * N^omega *
// (log N)^theta. Squared-exponential kernels: omega = 0, theta = input dim;
// linear kernels: omega = 0, theta = 1.
struct GammaGrowthModel {
  double c_gamma = 1.0;
  double omega = 0.0;
  double theta = 0.0;

  double operator()(std::int64_t N) const;
  void validate() const;
};

struct NoFixedPoint : NumericalError {
  using NumericalError::NumericalError;
};

struct TheoremInputs {
  double epsilon = 0.0;
  double alpha_lipschitz = 0.0;  // L_alpha
  double h_lipschitz = 0.0;      // L_h
  double xdot_bound = 0.0;       // L_xdot
  ConfidenceParams confidence;
  // Per-dimension information-gain estimate gamma_i(N); if unset, the growth
  // model is used for every dimension.
  std::function<double(int dim, std::int64_t N)> gamma_hat;
  std::optional<GammaGrowthModel> growth;
  std::int64_t scan_cap = 1000000000;

  void validate() const;
  double gamma(int dim, std::int64_t N) const;
};

// Smallest N such that
//   N > 32 beta_N^2 L_h^2 / eps^2 * sum_i gamma_i(N) / log(1 + sigma_i^-2),
// found by upward scan (doubling past 1024, then bisection to the boundary);
// N - 1 violates the inequality. Throws NoFixedPoint past scan_cap.
std::int64_t solve_delta_n_max(const TheoremInputs& inp);

// Sampling-time threshold eps / (L_alpha * L_h * L_xdot * delta_n_max);
// experiment configs choose their dt below this value.
double min_sampling_rate(const TheoremInputs& inp, std::int64_t delta_n_max);

// Closed-form variant: bounds the fixed-point right-hand side through the
// growth model, yielding the condition
//   N >= ( Ctilde * (log N)^(2 theta) )^(1 / (1 - 2 omega)),
// with Ctilde assembled from C1 = n B^2 + 2 n B sigma sqrt(2(1+log(n/delta)))
// + 2 n sigma^2 (1+log(n/delta)), C_3/2 = 2 sqrt(2) n B sigma, C2 = 2 n
// sigma^2 (B, sigma taken as the max over dimensions), scaled by
// 32 L_h^2 / (eps^2 log(1+sigma^-2)) and by (c_gamma^2 + 1) to absorb the
// additive slack. Requires omega < 1/2. The scan starts at N = 3 whenever
// the growth model actually involves N (the bound is asymptotic and the
// slack absorption needs N^(2 omega) (log N)^(2 theta) >= 1); in the
// degenerate omega = theta = 0 case it starts at 1 and the result is the
// smallest integer >= Ctilde. Dominates solve_delta_n_max whenever the
// growth model upper-bounds the empirical estimate on the scanned range.
std::int64_t appendix_c_closed_form(const TheoremInputs& inp);

}  // namespace gpcbf

#endif  // GPCBF_THEORY_HPP
