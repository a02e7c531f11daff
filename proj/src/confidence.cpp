#include "gpcbf/confidence.hpp"

#include <cmath>

namespace gpcbf {

void ConfidenceParams::validate() const {
  require(rkhs_bounds.size() > 0, "ConfidenceParams: empty RKHS bounds");
  require(rkhs_bounds.size() == noise_scales.size(),
          "ConfidenceParams: bounds/noise size mismatch");
  require((rkhs_bounds.array() >= 0.0).all(),
          "ConfidenceParams: RKHS bounds must be >= 0");
  require((noise_scales.array() >= 0.0).all(),
          "ConfidenceParams: noise scales must be >= 0");
  require(delta > 0.0 && delta < 1.0, "ConfidenceParams: delta must be in (0,1)");
}

InfoGainTable::InfoGainTable(CompositeKernel kernel, double noise_scale,
                             std::vector<StateInput> grid)
    : kernel_(std::move(kernel)), noise_(noise_scale), grid_(std::move(grid)) {
  kernel_.validate();
  require(noise_ > 0.0, "InfoGainTable: noise scale must be > 0");
  require(!grid_.empty(), "InfoGainTable: empty candidate grid");
  const int G = static_cast<int>(grid_.size());
  var_.resize(G);
  for (int g = 0; g < G; ++g) var_[g] = kernel_.diag(grid_[g]);
  taken_.assign(G, 0);
  V.resize(0, G);
  prefix_.push_back(0.0);
}

void InfoGainTable::extend() {
  const int G = static_cast<int>(grid_.size());
  const int rounds = static_cast<int>(selected_.size());
  if (rounds >= G) return;

  int best = -1;
  for (int g = 0; g < G; ++g) {
    if (taken_[g]) continue;
    if (best < 0 || var_[g] > var_[best]) best = g;
  }
  const double gain =
      0.5 * std::log1p(var_[best] / (noise_ * noise_));
  prefix_.push_back(prefix_.back() + gain);
  selected_.push_back(best);
  taken_[best] = 1;

  // Extend the whitened cross-covariance rows: one Cholesky row of
  // (K_S + σ² I) against every candidate, then downdate variances.
  Vec cross(G);
  for (int g = 0; g < G; ++g) cross[g] = kernel_.eval(grid_[best], grid_[g]);
  Vec row = cross;
  if (rounds > 0) {
    row.noalias() -= V.transpose() * V.col(best);
  }
  const double pivot = std::sqrt(var_[best] + noise_ * noise_);
  row /= pivot;
  V.conservativeResize(rounds + 1, Eigen::NoChange);
  V.row(rounds) = row;
  var_.array() -= row.array().square();
  var_ = var_.cwiseMax(0.0);
}

double InfoGainTable::gamma(int N) {
  require(N >= 0, "InfoGainTable::gamma: N must be >= 0");
  const int target = std::min<int>(N, grid_size());
  while (static_cast<int>(selected_.size()) < target) extend();
  return prefix_[target];
}

double info_gain_greedy(const CompositeKernel& kernel, double noise_scale,
                        const std::vector<StateInput>& grid, int N) {
  InfoGainTable table(kernel, noise_scale, grid);
  return table.gamma(N);
}

double confidence_beta(const ConfidenceParams& params, const Vec& gammas) {
  params.validate();
  require(gammas.size() == params.rkhs_bounds.size(),
          "confidence_beta: gamma count must match output dims");
  require((gammas.array() >= 0.0).all(),
          "confidence_beta: information gains must be >= 0");
  const double n = static_cast<double>(params.rkhs_bounds.size());
  double beta = 0.0;
  for (int i = 0; i < gammas.size(); ++i) {
    const double slack = 2.0 * (gammas[i] + 1.0 + std::log(n / params.delta));
    beta = std::max(beta, params.rkhs_bounds[i] +
                              params.noise_scales[i] * std::sqrt(slack));
  }
  return beta;
}

std::pair<double, double> hdot_bounds(const GpPosterior& gp, double beta,
                                      const Vec& grad_h, double h_lipschitz,
                                      const StateInput& z, GpWorkspace& ws) {
  require(beta >= 0.0, "hdot_bounds: beta must be >= 0");
  require(h_lipschitz >= 0.0, "hdot_bounds: h Lipschitz constant must be >= 0");
  require(grad_h.size() == gp.output_dim(),
          "hdot_bounds: gradient length must match output dims");
  Vec mean, var;
  gp.mean_var(z, mean, var, ws);
  const double center = grad_h.dot(mean);
  const double radius = h_lipschitz * beta * std::sqrt(var.sum());
  return {center - radius, center + radius};
}

}  // namespace gpcbf
