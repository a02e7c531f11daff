#include "gpcbf/cone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

namespace gpcbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Scalar fast path used by the 1-D solver specialization.
double slack_1d(const ConeConstraint& c, double u) {
  const double q =
      std::max(c.M(0, 0) + 2.0 * c.M(0, 1) * u + c.M(1, 1) * u * u, 0.0);
  return c.a[0] * u + c.b - c.radius * std::sqrt(q) - c.rhs;
}

double joint_slack_1d(const ConeProblem& p, double u) {
  double s = kInf;
  for (const auto& c : p.constraints) s = std::min(s, slack_1d(c, u));
  return s;
}

// Golden-section maximization of a unimodal function on [lo, hi].
template <typename F>
std::pair<double, double> golden_max(const F& f, double lo, double hi) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
  double f1 = f(c1), f2 = f(c2);
  for (int it = 0; it < 220; ++it) {
    if (b - a <= 1e-14 * (1.0 + std::abs(a) + std::abs(b))) break;
    if (f1 < f2) {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + gr * (b - a);
      f2 = f(c2);
    } else {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - gr * (b - a);
      f1 = f(c1);
    }
  }
  const double um = 0.5 * (a + b);
  return {f(um), um};
}

// Root of f on [neg, pos] with f(neg) < 0 ≤ f(pos); returns a point on the
// nonnegative side.
template <typename F>
double bisect_to_feasible(const F& f, double neg, double pos) {
  for (int it = 0; it < 110; ++it) {
    const double mid = 0.5 * (neg + pos);
    if (mid == neg || mid == pos) break;
    if (f(mid) >= 0.0) {
      pos = mid;
    } else {
      neg = mid;
    }
  }
  return pos;
}

double margin_1d(const ConeProblem& p, Vec* maximizer) {
  const double lo = p.box.lower[0], hi = p.box.upper[0];
  auto joint = [&](double u) { return joint_slack_1d(p, u); };
  auto [val, um] = golden_max(joint, lo, hi);
  // The endpoints are candidates too; golden section alone can sit one
  // interval-width inside when the maximum is at the boundary.
  if (joint(lo) > val) {
    val = joint(lo);
    um = lo;
  }
  if (joint(hi) > val) {
    val = joint(hi);
    um = hi;
  }
  if (maximizer) *maximizer = Vec::Constant(1, um);
  return val;
}

FilterResult filter_1d(const ConeProblem& p, double margin, double um) {
  FilterResult res;
  res.margin = margin;
  if (margin <= 0.0) return res;
  const double lo = p.box.lower[0], hi = p.box.upper[0];
  auto joint = [&](double u) { return joint_slack_1d(p, u); };
  // The feasible set {u : min_k slack_k(u) ≥ 0} ∩ box is an interval because
  // the joint slack is concave. um lies inside it with positive slack.
  double left = lo, right = hi;
  if (joint(lo) < 0.0) left = bisect_to_feasible(joint, lo, um);
  if (joint(hi) < 0.0) {
    auto flipped = [&](double u) { return joint(lo + hi - u); };
    right = lo + hi - bisect_to_feasible(flipped, lo, lo + hi - um);
  }
  res.status = FilterStatus::Feasible;
  res.u = Vec::Constant(1, std::clamp(p.u_nom[0], left, right));
  return res;
}

// First-order data of one cone constraint at u: slack, gradient of φ, and the
// negated Hessian of φ (PSD since φ is concave).
struct ConeDerivs {
  double slack = 0.0;
  Vec grad;
  Mat curv;
};

void cone_derivs(const ConeConstraint& c, const Vec& u, ConeDerivs& out) {
  const int m = static_cast<int>(u.size());
  Vec w = c.M.col(0);
  w.noalias() += c.M.rightCols(m) * u;  // M ũ
  const double q = std::max(w[0] + u.dot(w.tail(m)), 0.0);
  const double lin = c.a.dot(u) + c.b;
  if (c.radius <= 0.0 || q < 1e-300) {
    out.slack = lin - c.radius * std::sqrt(q) - c.rhs;
    out.grad = c.a;
    out.curv.setZero(m, m);
    return;
  }
  const double s = std::sqrt(q);
  Vec v = w.tail(m);
  out.slack = lin - c.radius * s - c.rhs;
  out.grad = c.a - (c.radius / s) * v;
  out.curv = (c.radius / s) *
             (c.M.bottomRightCorner(m, m) - (v * v.transpose()) / q);
}

void require_strict_box(const InputBox& box) {
  require((box.upper - box.lower).minCoeff() > 0.0,
          "cone solver: interior-point path needs a nondegenerate box");
}

[[noreturn]] void solver_failure(const char* which, double tau, int iters,
                                 const Vec& u) {
  std::ostringstream msg;
  msg << which << ": Newton iteration budget exhausted (tau=" << tau
      << ", iters=" << iters << ", u=[" << u.transpose() << "])";
  throw NumericalError(msg.str());
}

// Barrier solve of the margin program max t s.t. slack_k(u) ≥ t, u in box.
double margin_ipm(const ConeProblem& p, const SolveOptions& opts,
                  Vec* maximizer) {
  require_strict_box(p.box);
  const int m = p.box.dim();
  const int K = static_cast<int>(p.constraints.size());
  const double nu = K + 2.0 * m;

  Vec u = p.box.center();
  std::vector<ConeDerivs> cd(K);
  for (int k = 0; k < K; ++k) cone_derivs(p.constraints[k], u, cd[k]);
  double min_slack = kInf;
  for (const auto& d : cd) min_slack = std::min(min_slack, d.slack);
  double t = min_slack - std::max(1.0, 0.1 * std::abs(min_slack));

  auto psi = [&](const Vec& uu, double tt, double tau) {
    double val = -tau * tt;
    for (int k = 0; k < K; ++k) {
      ConeDerivs d;
      cone_derivs(p.constraints[k], uu, d);
      const double s = d.slack - tt;
      if (s <= 0.0) return kInf;
      val -= std::log(s);
    }
    for (int ddim = 0; ddim < m; ++ddim) {
      const double a = uu[ddim] - p.box.lower[ddim];
      const double b = p.box.upper[ddim] - uu[ddim];
      if (a <= 0.0 || b <= 0.0) return kInf;
      val -= std::log(a) + std::log(b);
    }
    return val;
  };

  double tau = 1.0;
  int budget = opts.max_newton;
  Vec g(m + 1), step(m + 1);
  Mat H(m + 1, m + 1);
  while (true) {
    for (int inner = 0; inner < 60; ++inner) {
      if (--budget < 0) solver_failure("feasibility_margin", tau, opts.max_newton, u);
      g.setZero();
      H.setZero();
      g[m] = -tau;
      for (int k = 0; k < K; ++k) {
        cone_derivs(p.constraints[k], u, cd[k]);
        const double s = cd[k].slack - t;
        const double inv = 1.0 / s;
        g.head(m) -= inv * cd[k].grad;
        g[m] += inv;
        H.topLeftCorner(m, m) +=
            (inv * inv) * (cd[k].grad * cd[k].grad.transpose()) +
            inv * cd[k].curv;
        H.col(m).head(m) -= (inv * inv) * cd[k].grad;
        H(m, m) += inv * inv;
      }
      H.row(m).head(m) = H.col(m).head(m);
      for (int d = 0; d < m; ++d) {
        const double a = u[d] - p.box.lower[d];
        const double b = p.box.upper[d] - u[d];
        g[d] += -1.0 / a + 1.0 / b;
        H(d, d) += 1.0 / (a * a) + 1.0 / (b * b);
      }

      Eigen::LDLT<Mat> ldlt(H);
      step = -ldlt.solve(g);
      double lambda2 = -g.dot(step);
      if (!(lambda2 > 0.0)) {
        H.diagonal().array() += 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
        step = -H.ldlt().solve(g);
        lambda2 = -g.dot(step);
        if (!(lambda2 > 0.0)) break;
      }
      if (lambda2 < 1e-11) break;

      const double psi0 = psi(u, t, tau);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec u_try = u + alpha * step.head(m);
        const double t_try = t + alpha * step[m];
        const double val = psi(u_try, t_try, tau);
        if (val < psi0 - 0.01 * alpha * lambda2) {
          u = u_try;
          t = t_try;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    if (nu / tau <= opts.gap_tol * std::max(1.0, std::abs(t))) break;
    tau *= opts.barrier_factor;
  }

  double achieved = kInf;
  for (int k = 0; k < K; ++k) {
    ConeDerivs d;
    cone_derivs(p.constraints[k], u, d);
    achieved = std::min(achieved, d.slack);
  }
  if (maximizer) *maximizer = u;
  return achieved;
}

// Barrier solve of min ‖u − u_nom‖ s.t. slack_k(u) ≥ 0, u in box, starting
// from a strictly feasible u0 (the margin maximizer).
Vec filter_ipm(const ConeProblem& p, const Vec& u0, const SolveOptions& opts) {
  require_strict_box(p.box);
  const int m = p.box.dim();
  const int K = static_cast<int>(p.constraints.size());
  const double nu = 2.0 + K + 2.0 * m;

  Vec u = u0;
  double t = (u - p.u_nom).norm() + 1.0;

  auto psi = [&](const Vec& uu, double tt, double tau) {
    const double w2 = tt * tt - (uu - p.u_nom).squaredNorm();
    if (w2 <= 0.0 || tt <= 0.0) return kInf;
    double val = tau * tt - std::log(w2);
    for (int k = 0; k < K; ++k) {
      ConeDerivs d;
      cone_derivs(p.constraints[k], uu, d);
      if (d.slack <= 0.0) return kInf;
      val -= std::log(d.slack);
    }
    for (int dd = 0; dd < m; ++dd) {
      const double a = uu[dd] - p.box.lower[dd];
      const double b = p.box.upper[dd] - uu[dd];
      if (a <= 0.0 || b <= 0.0) return kInf;
      val -= std::log(a) + std::log(b);
    }
    return val;
  };

  std::vector<ConeDerivs> cd(K);
  double tau = 1.0;
  int budget = opts.max_newton;
  Vec g(m + 1), step(m + 1);
  Mat H(m + 1, m + 1);
  while (true) {
    for (int inner = 0; inner < 60; ++inner) {
      if (--budget < 0) solver_failure("solve_safety_filter", tau, opts.max_newton, u);
      g.setZero();
      H.setZero();
      const Vec d = u - p.u_nom;
      const double w2 = t * t - d.squaredNorm();
      g.head(m) = (2.0 / w2) * d;
      g[m] = tau - 2.0 * t / w2;
      H.topLeftCorner(m, m) =
          (2.0 / w2) * Mat::Identity(m, m) + (4.0 / (w2 * w2)) * (d * d.transpose());
      H(m, m) = -2.0 / w2 + 4.0 * t * t / (w2 * w2);
      H.col(m).head(m) = -(4.0 * t / (w2 * w2)) * d;

      for (int k = 0; k < K; ++k) {
        cone_derivs(p.constraints[k], u, cd[k]);
        const double inv = 1.0 / cd[k].slack;
        g.head(m) -= inv * cd[k].grad;
        H.topLeftCorner(m, m) +=
            (inv * inv) * (cd[k].grad * cd[k].grad.transpose()) +
            inv * cd[k].curv;
      }
      H.row(m).head(m) = H.col(m).head(m);
      for (int dd = 0; dd < m; ++dd) {
        const double a = u[dd] - p.box.lower[dd];
        const double b = p.box.upper[dd] - u[dd];
        g[dd] += -1.0 / a + 1.0 / b;
        H(dd, dd) += 1.0 / (a * a) + 1.0 / (b * b);
      }

      Eigen::LDLT<Mat> ldlt(H);
      step = -ldlt.solve(g);
      double lambda2 = -g.dot(step);
      if (!(lambda2 > 0.0)) {
        H.diagonal().array() += 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
        step = -H.ldlt().solve(g);
        lambda2 = -g.dot(step);
        if (!(lambda2 > 0.0)) break;
      }
      if (lambda2 < 1e-11) break;

      const double psi0 = psi(u, t, tau);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec u_try = u + alpha * step.head(m);
        const double t_try = t + alpha * step[m];
        if (psi(u_try, t_try, tau) < psi0 - 0.01 * alpha * lambda2) {
          u = u_try;
          t = t_try;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    if (nu / tau <= opts.gap_tol * std::max(1.0, std::abs(t))) break;
    tau *= opts.barrier_factor;
  }
  return u;
}

bool lex_less(const Vec& x, const Vec& y) {
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] < y[i]) return true;
    if (x[i] > y[i]) return false;
  }
  return false;
}

}  // namespace

double ConeConstraint::norm_term(const Vec& u) const {
  const int m = static_cast<int>(u.size());
  double q = M(0, 0);
  if (m > 0) {
    q += 2.0 * M.row(0).tail(m).dot(u);
    q += u.dot(M.bottomRightCorner(m, m) * u);
  }
  return std::sqrt(std::max(q, 0.0));
}

double ConeConstraint::slack(const Vec& u) const {
  return a.dot(u) + b - radius * norm_term(u) - rhs;
}

double ConeConstraint::ucb_value(const Vec& u) const {
  return a.dot(u) + b + radius * norm_term(u);
}

void ConeConstraint::validate(int m) const {
  require(a.size() == m, "ConeConstraint: linear term dimension mismatch");
  require(M.rows() == m + 1 && M.cols() == m + 1,
          "ConeConstraint: M must be (m+1) x (m+1)");
  require(radius >= 0.0, "ConeConstraint: radius must be >= 0");
  const double scale = 1.0 + M.cwiseAbs().maxCoeff();
  require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
          "ConeConstraint: M must be symmetric");
}

void ConeProblem::validate() const {
  const int m = box.dim();
  require(m >= 1, "ConeProblem: empty input box");
  require(box.upper.size() == m, "ConeProblem: box bound size mismatch");
  require((box.lower.array() <= box.upper.array()).all(),
          "ConeProblem: box lower must be <= upper");
  require(u_nom.size() == m, "ConeProblem: u_nom dimension mismatch");
  require(!constraints.empty(), "ConeProblem: no constraints");
  for (const auto& c : constraints) c.validate(m);
}

double feasibility_margin(const ConeProblem& p, const SolveOptions& opts,
                          Vec* maximizer) {
  p.validate();
  if (p.box.dim() == 1) return margin_1d(p, maximizer);
  return margin_ipm(p, opts, maximizer);
}

FilterResult solve_safety_filter(const ConeProblem& p,
                                 const SolveOptions& opts) {
  p.validate();
  FilterResult res;
  Vec um;
  res.margin = feasibility_margin(p, opts, &um);
  if (res.margin <= 0.0) return res;

  if (p.box.dim() == 1) return filter_1d(p, res.margin, um[0]);

  // u_nom feasible means it is optimal outright (objective zero).
  double nom_slack = kInf;
  for (const auto& c : p.constraints) {
    nom_slack = std::min(nom_slack, c.slack(p.u_nom));
  }
  if (nom_slack >= 0.0 && p.box.contains(p.u_nom)) {
    res.status = FilterStatus::Feasible;
    res.u = p.u_nom;
    return res;
  }

  res.status = FilterStatus::Feasible;
  res.u = filter_ipm(p, um, opts);
  return res;
}

Vec ucb_maximizing_input(const ConeConstraint& c, const InputBox& box) {
  const int m = box.dim();
  require(m >= 1, "ucb_maximizing_input: empty box");
  require(m <= 16, "ucb_maximizing_input: vertex enumeration supports m <= 16");
  require((box.lower.array() <= box.upper.array()).all(),
          "ucb_maximizing_input: box lower must be <= upper");
  c.validate(m);

  Vec best = box.lower, u(m);
  double best_val = c.ucb_value(best);
  const std::uint32_t count = 1u << m;
  for (std::uint32_t mask = 1; mask < count; ++mask) {
    for (int d = 0; d < m; ++d) {
      u[d] = (mask >> d) & 1u ? box.upper[d] : box.lower[d];
    }
    const double val = c.ucb_value(u);
    const double tie = 1e-11 * (1.0 + std::abs(best_val));
    if (val > best_val + tie) {
      best_val = val;
      best = u;
    } else if (val > best_val - tie && lex_less(u, best)) {
      best = u;
    }
  }
  return best;
}

}  // namespace gpcbf
