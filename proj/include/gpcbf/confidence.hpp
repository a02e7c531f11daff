#ifndef GPCBF_CONFIDENCE_HPP
#define GPCBF_CONFIDENCE_HPP

#include <utility>

#include "gpcbf/gp.hpp"
#include "gpcbf/kernel.hpp"
#include "gpcbf/types.hpp"

namespace gpcbf {

// Inputs of the confidence scaling β_N: per-output-dim RKHS norm bounds B_i,
// sub-Gaussian noise scales σ_i, and the joint confidence level δ.
struct ConfidenceParams {
  Vec rkhs_bounds;
  Vec noise_scales;
  double delta = 0.01;

  void validate() const;
};

// Greedy estimate of the maximal information gain of one composite kernel on
// a finite candidate set. Selection is the standard greedy argmax of the
// marginal gain ½ log(1 + σ⁻² var(z)) with ties resolved toward the lowest
// candidate index; the estimate saturates once every candidate is selected.
// The table extends lazily, so querying gamma(N) after gamma(N-1) costs one
// greedy round.
class InfoGainTable {
 public:
  InfoGainTable(CompositeKernel kernel, double noise_scale,
                std::vector<StateInput> grid);

  // γ̂ at sample count N (≥ 0); clamps to the full-set value for N > grid size.
  double gamma(int N);
  int grid_size() const { return static_cast<int>(grid_.size()); }
  // Candidate indices in selection order (for tests).
  const std::vector<int>& selection() const { return selected_; }

 private:
  void extend();  // one greedy round

  CompositeKernel kernel_;
  double noise_;
  std::vector<StateInput> grid_;
  Mat V;                          // whitened cross-covariances, rounds × grid
  Vec var_;                       // current posterior variance per candidate
  std::vector<char> taken_;       // candidates already in the subset
  std::vector<double> prefix_;    // γ̂ at N = 0, 1, …
  std::vector<int> selected_;
};

// One-shot greedy information gain (builds a table and queries it once).
double info_gain_greedy(const CompositeKernel& kernel, double noise_scale,
                        const std::vector<StateInput>& grid, int N);

// Confidence scaling β_N = max_i (B_i + σ_i √(2 (γ_i + 1 + log(n/δ)))).
double confidence_beta(const ConfidenceParams& params, const Vec& gammas);

// High-probability bracket of ḣ at z: ∇h·μ_N(z) ∓ L_h β √(Σ_i var_i(z)).
// Returns (lcb, ucb).
std::pair<double, double> hdot_bounds(const GpPosterior& gp, double beta,
                                      const Vec& grad_h, double h_lipschitz,
                                      const StateInput& z, GpWorkspace& ws);

}  // namespace gpcbf

#endif  // GPCBF_CONFIDENCE_HPP
