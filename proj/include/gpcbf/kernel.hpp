#ifndef GPCBF_KERNEL_HPP
#define GPCBF_KERNEL_HPP

#include "gpcbf/types.hpp"

namespace gpcbf {

// Squared-exponential kernel over the state,
//   k(x, x') = sf² exp(−½ Σ_d ((x_d − x'_d)/ℓ_d)²),
// with one lengthscale per state dimension.
struct SqExpKernel {
  double signal_variance = 1.0;  // sf²
  Vec lengthscales;              // ℓ, size n, all > 0

  double operator()(const Vec& a, const Vec& b) const;
  int dim() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;

  // Convenience: isotropic kernel.
  static SqExpKernel isotropic(double signal_variance, double lengthscale, int n);
};

// Kernel for one output dimension of control-affine dynamics,
//   k((x,u), (x',u')) = k_f(x, x') + Σ_j u_j u'_j k_{g_j}(x, x').
// The base term models the drift entry, each channel term one input column entry.
struct CompositeKernel {
  SqExpKernel base;                  // k_f
  std::vector<SqExpKernel> channels; // k_{g_j}, one per input dimension

  int state_dim() const { return base.dim(); }
  int input_dim() const { return static_cast<int>(channels.size()); }

  double eval(const StateInput& a, const StateInput& b) const;
  // k(z, z) without forming the generic product; cheaper and exact.
  double diag(const StateInput& z) const;
  // Sum of signal variances; scale proxy used for the factorization jitter.
  double signal_variance_sum() const;
  void validate() const;
};

// Gram matrix K with K_ij = k(z_i, z_j); symmetric PSD up to roundoff.
Mat gram_matrix(const CompositeKernel& k, const std::vector<StateInput>& pts);

}  // namespace gpcbf

#endif  // GPCBF_KERNEL_HPP
