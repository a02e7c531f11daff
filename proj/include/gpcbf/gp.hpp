#ifndef GPCBF_GP_HPP
#define GPCBF_GP_HPP

#include <memory>

#include "gpcbf/kernel.hpp"
#include "gpcbf/types.hpp"

namespace gpcbf {

// Posterior of the multi-output dynamics GP at a fixed state x.
// Per output dimension i the posterior mean is affine in the input,
//   mean_i(u) = b[i] + A.row(i) · u,
// and the summed posterior variance is a quadratic form in ũ = (1, u),
//   Σ_i var_i(x, u) = ũᵀ M ũ,
// exact for the composite kernel (no approximation involved).
struct AffineForm {
  Vec b;  // n
  Mat A;  // n × m
  Mat M;  // (m+1) × (m+1), symmetric PSD up to roundoff

  double mean_along(const Vec& weights, const Vec& u) const {
    return weights.dot(b) + weights.dot(A * u);
  }
  double trace_variance(const Vec& u) const;
};

// Reusable buffers for AffineForm assembly and posterior queries; callers on a
// hot path keep one alive to avoid per-step allocation.
struct GpWorkspace {
  Mat C;    // N × (m+1) kernel cross terms for one output dim
  Mat S;    // N × (m+1) whitened cross terms
  Vec dist; // N squared-distance scratch
  Vec kf;   // N base-kernel scratch
};

// Multi-output GP posterior over control-affine dynamics, one independent
// scalar GP per state dimension sharing the (x, u) training points. Value
// semantics: append returns a new posterior, copies share immutable storage.
class GpPosterior {
 public:
  GpPosterior() = default;

  // Batch construction: factorizes K_i + (σ_i² + jitter_i) I per output dim.
  // jitter_i = 1e-10 × (sum of signal variances of kernel i), a fixed
  // conditioning safeguard chosen so incremental extension and batch refit
  // factorize the same matrix.
  static GpPosterior fit(std::vector<CompositeKernel> kernels, Vec noise_scales,
                         const std::vector<Measurement>& data);

  // Rank-1 extension of each per-dim factorization; O(N²) per output dim.
  // The result is numerically identical to refitting from scratch.
  GpPosterior append(const Measurement& m) const;

  // Posterior mean and variance per output dim at z. Variances are clamped to
  // zero when within roundoff of it; a variance more negative than the
  // roundoff allowance raises NumericalError.
  void mean_var(const StateInput& z, Vec& mean, Vec& var, GpWorkspace& ws) const;
  void mean_var(const StateInput& z, Vec& mean, Vec& var) const;

  // Vectorized posterior over many query points; means and vars are Q × n.
  void mean_var_batch(const std::vector<StateInput>& zs, Mat& means,
                      Mat& vars) const;

  // Posterior as a function of u at fixed state x; see AffineForm.
  void affine_form(const Vec& x, AffineForm& out, GpWorkspace& ws) const;

  int size() const;       // N, number of stored measurements
  int state_dim() const;
  int input_dim() const;
  int output_dim() const;
  const CompositeKernel& kernel(int i) const;
  double noise_scale(int i) const;
  double jitter(int i) const;
  std::vector<StateInput> points() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  explicit GpPosterior(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
};

}  // namespace gpcbf

#endif  // GPCBF_GP_HPP
