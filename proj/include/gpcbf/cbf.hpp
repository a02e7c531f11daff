#ifndef GPCBF_CBF_HPP
#define GPCBF_CBF_HPP

#include <functional>
#include <string>

#include "gpcbf/types.hpp"

namespace gpcbf {

// A control barrier function h with its safe set {x : h(x) >= 0}, the
// extended class-K rate alpha (strictly increasing, alpha(0) = 0), and the
// Lipschitz constants the robust filter needs.
struct CbfSpec {
  std::function<double(const Vec&)> h;
  std::function<Vec(const Vec&)> grad_h;
  std::function<double(double)> alpha;
  double alpha_lipschitz = 1.0;  // L_alpha
  double epsilon = 0.5;          // robustness margin in the filter constraint
  double h_lipschitz = 1.0;      // L_h, bound on the gradient norm over X
  std::string name = "h";

  void validate() const {
    require(static_cast<bool>(h) && static_cast<bool>(grad_h) &&
                static_cast<bool>(alpha),
            "CbfSpec: h, grad_h, alpha must all be set");
    require(alpha_lipschitz > 0.0, "CbfSpec: alpha_lipschitz must be > 0");
    require(epsilon > 0.0, "CbfSpec: epsilon must be > 0");
    require(h_lipschitz > 0.0, "CbfSpec: h_lipschitz must be > 0");
    require(std::abs(alpha(0.0)) == 0.0, "CbfSpec: alpha(0) must be 0");
  }
};

// Linear rate alpha(s) = slope * s, the shape used by both benchmark plants.
inline std::function<double(double)> linear_alpha(double slope) {
  require(slope > 0.0, "linear_alpha: slope must be > 0");
  return [slope](double s) { return slope * s; };
}

}  // namespace gpcbf

#endif  // GPCBF_CBF_HPP
