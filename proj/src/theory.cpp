#include "gpcbf/theory.hpp"

#include <cmath>
#include <sstream>

namespace gpcbf {

namespace {

// First N >= start satisfying pred, by linear scan, then doubling plus
// bisection, then a walk-down to the boundary (pred need not be monotone,
// so minimality is enforced locally).
std::int64_t first_satisfying(const std::function<bool(std::int64_t)>& pred,
                              std::int64_t start, std::int64_t cap,
                              const char* what) {
  std::int64_t found = -1;
  const std::int64_t linear_end = std::min<std::int64_t>(cap, 1024);
  for (std::int64_t N = start; N <= linear_end; ++N) {
    if (pred(N)) {
      found = N;
      break;
    }
  }
  if (found < 0) {
    std::int64_t lo = linear_end;  // known failing
    std::int64_t hi = linear_end;
    while (true) {
      if (hi >= cap) {
        std::ostringstream msg;
        msg << what << ": no fixed point up to the scan cap " << cap;
        throw NoFixedPoint(msg.str());
      }
      hi = std::min(cap, hi * 2);
      if (pred(hi)) break;
      lo = hi;
    }
    while (hi - lo > 1) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (pred(mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    found = hi;
  }
  while (found > start && pred(found - 1)) --found;
  return found;
}

}  // namespace

double GammaGrowthModel::operator()(std::int64_t N) const {
  require(N >= 1, "GammaGrowthModel: N must be >= 1");
  const double logN = std::log(static_cast<double>(N));
  return c_gamma * std::pow(static_cast<double>(N), omega) *
         std::pow(logN, theta);
}

void GammaGrowthModel::validate() const {
  require(c_gamma > 0.0, "GammaGrowthModel: c_gamma must be positive");
  require(omega >= 0.0, "GammaGrowthModel: omega must be >= 0");
  require(theta >= 0.0, "GammaGrowthModel: theta must be >= 0");
}

void TheoremInputs::validate() const {
  require(epsilon > 0.0, "TheoremInputs: epsilon must be positive");
  require(alpha_lipschitz > 0.0, "TheoremInputs: alpha_lipschitz must be positive");
  require(h_lipschitz > 0.0, "TheoremInputs: h_lipschitz must be positive");
  require(xdot_bound > 0.0, "TheoremInputs: xdot_bound must be positive");
  confidence.validate();
  require(static_cast<bool>(gamma_hat) || growth.has_value(),
          "TheoremInputs: need an empirical gamma table or a growth model");
  if (growth) growth->validate();
  require(scan_cap >= 2, "TheoremInputs: scan_cap too small");
}

double TheoremInputs::gamma(int dim, std::int64_t N) const {
  if (gamma_hat) return gamma_hat(dim, N);
  return (*growth)(N);
}

std::int64_t solve_delta_n_max(const TheoremInputs& inp) {
  inp.validate();
  const int n = static_cast<int>(inp.confidence.noise_scales.size());
  auto rhs = [&](std::int64_t N) {
    Vec gammas(n);
    for (int i = 0; i < n; ++i) gammas[i] = inp.gamma(i, N);
    const double beta = confidence_beta(inp.confidence, gammas);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sigma = inp.confidence.noise_scales[i];
      sum += gammas[i] / std::log1p(1.0 / (sigma * sigma));
    }
    return 32.0 * beta * beta * inp.h_lipschitz * inp.h_lipschitz * sum /
           (inp.epsilon * inp.epsilon);
  };
  auto pred = [&](std::int64_t N) { return static_cast<double>(N) > rhs(N); };
  return first_satisfying(pred, 1, inp.scan_cap, "solve_delta_n_max");
}

double min_sampling_rate(const TheoremInputs& inp, std::int64_t delta_n_max) {
  inp.validate();
  require(delta_n_max >= 1, "min_sampling_rate: delta_n_max must be >= 1");
  return inp.epsilon / (inp.alpha_lipschitz * inp.h_lipschitz *
                        inp.xdot_bound * static_cast<double>(delta_n_max));
}

std::int64_t appendix_c_closed_form(const TheoremInputs& inp) {
  inp.validate();
  require(inp.growth.has_value(),
          "appendix_c_closed_form: a growth model is required");
  const GammaGrowthModel& gm = *inp.growth;
  require(gm.omega < 0.5,
          "appendix_c_closed_form: needs omega < 1/2 for a finite exponent");

  const int n = static_cast<int>(inp.confidence.noise_scales.size());
  const double B = inp.confidence.rkhs_bounds.maxCoeff();
  const double sigma = inp.confidence.noise_scales.maxCoeff();
  const double log_term = 1.0 + std::log(n / inp.confidence.delta);
  const double c1 = n * B * B + 2.0 * n * B * sigma * std::sqrt(2.0 * log_term) +
                    2.0 * n * sigma * sigma * log_term;
  const double c32 = 2.0 * std::sqrt(2.0) * n * B * sigma;
  const double c2 = 2.0 * n * sigma * sigma;
  const double scale = 32.0 * inp.h_lipschitz * inp.h_lipschitz /
                       (inp.epsilon * inp.epsilon *
                        std::log1p(1.0 / (sigma * sigma)));
  const double c_tilde = scale * (c1 + c32 + c2) * (gm.c_gamma * gm.c_gamma + 1.0);

  const double exponent = 1.0 / (1.0 - 2.0 * gm.omega);
  auto pred = [&](std::int64_t N) {
    const double logN = std::log(static_cast<double>(N));
    const double rhs =
        std::pow(c_tilde * std::pow(logN, 2.0 * gm.theta), exponent);
    return static_cast<double>(N) >= rhs;
  };
  const std::int64_t start = (gm.omega == 0.0 && gm.theta == 0.0) ? 1 : 3;
  return first_satisfying(pred, start, inp.scan_cap, "appendix_c_closed_form");
}

}  // namespace gpcbf
