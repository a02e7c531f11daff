#ifndef GPCBF_CONE_HPP
#define GPCBF_CONE_HPP

#include <vector>

#include "gpcbf/types.hpp"

namespace gpcbf {

// One robust CBF constraint in second-order-cone form:
//   φ(u) = aᵀu + b − radius · √(ũᵀ M ũ) ≥ rhs,   ũ = (1, uᵀ)ᵀ.
// a, b carry ∇h·(posterior mean), radius = L_h β, M the summed posterior
// variance quadratic, rhs = −α(h(x)) + ε/2.
struct ConeConstraint {
  Vec a;
  double b = 0.0;
  double radius = 0.0;
  Mat M;
  double rhs = 0.0;

  // √(ũᵀMũ), clamped against roundoff.
  double norm_term(const Vec& u) const;
  // φ(u) − rhs; the constraint is satisfied when this is ≥ 0.
  double slack(const Vec& u) const;
  // aᵀu + b + radius √(ũᵀMũ), the optimistic counterpart.
  double ucb_value(const Vec& u) const;
  void validate(int m) const;
};

// Safety filter instance: project u_nom onto the intersection of the cone
// constraints with the input box.
struct ConeProblem {
  std::vector<ConeConstraint> constraints;
  Vec u_nom;
  InputBox box;

  void validate() const;
};

struct SolveOptions {
  double gap_tol = 1e-9;         // barrier suboptimality target (absolute)
  double feas_tol = 1e-6;        // constraint violation allowance on returns
  double barrier_factor = 10.0;  // τ growth per outer stage
  int max_newton = 600;          // Newton iteration budget per solve
};

enum class FilterStatus { Feasible, Infeasible };

struct FilterResult {
  FilterStatus status = FilterStatus::Infeasible;
  Vec u;                // valid when Feasible
  double margin = 0.0;  // joint feasibility margin, always populated
};

// Joint feasibility margin max_{u ∈ box} min_k (φ_k(u) − rhs_k). Positive iff
// the filter program is strictly feasible. For a single constraint this is the
// trigger margin; exploration fires when it drops to ≤ 0. The optional
// maximizer receives the attaining input.
double feasibility_margin(const ConeProblem& p, const SolveOptions& opts = {},
                          Vec* maximizer = nullptr);

// Minimum-deviation safe input: argmin ‖u − u_nom‖ subject to all cone
// constraints and the box. Returns Infeasible exactly when the joint margin
// is ≤ 0; the margin field always carries the computed margin.
FilterResult solve_safety_filter(const ConeProblem& p,
                                 const SolveOptions& opts = {});

// Maximizer of the optimistic rate aᵀu + b + radius √(ũᵀMũ) over the box.
// Convex in u, so the maximum sits at a box vertex; ties resolve to the
// lexicographically smallest vertex. Supports m ≤ 16.
Vec ucb_maximizing_input(const ConeConstraint& c, const InputBox& box);

}  // namespace gpcbf

#endif  // GPCBF_CONE_HPP
