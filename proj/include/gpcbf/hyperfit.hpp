#ifndef GPCBF_HYPERFIT_HPP
#define GPCBF_HYPERFIT_HPP

#include <string>
#include <utility>

#include "gpcbf/kernel.hpp"
#include "gpcbf/types.hpp"

namespace gpcbf {

struct FitOptions {
  int restarts = 8;      // multi-start count, first start is the init point
  int max_iters = 400;   // Nelder-Mead iterations per start
  unsigned seed = 0;     // start-point perturbation seed
  bool ard = true;       // per-dimension lengthscales; false shares one per kernel
};

// Exact log marginal likelihood of the targets for one output dimension under
// the composite kernel with noise σ (the same σ² + jitter diagonal used by
// GpPosterior, so fitted kernels and the posterior agree on conditioning).
double log_marginal_likelihood(const CompositeKernel& kernel, double noise_scale,
                               const std::vector<Measurement>& data,
                               int output_dim);

// Multi-start Nelder-Mead maximization of the log marginal likelihood in log
// parameter space, independently per output dimension. Noise scales are fixed
// inputs, not fitted. The returned kernels never score below the init ones.
std::vector<CompositeKernel> fit_hyperparameters(
    const std::vector<Measurement>& data,
    const std::vector<CompositeKernel>& init, const Vec& noise_scales,
    const FitOptions& opts = {});

// Hyperparameter file round trip (JSON: per-dim signal variances,
// lengthscales, noise scale).
void save_hyperparameters(const std::string& path,
                          const std::vector<CompositeKernel>& kernels,
                          const Vec& noise_scales);
std::pair<std::vector<CompositeKernel>, Vec> load_hyperparameters(
    const std::string& path);

}  // namespace gpcbf

#endif  // GPCBF_HYPERFIT_HPP
