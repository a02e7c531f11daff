#include "gpcbf/plants.hpp"

#include <cmath>
#include <sstream>

namespace gpcbf {

namespace {

constexpr double kQuadKp = 2.0;   // position gain of the hover PD
constexpr double kQuadKd = 3.0;   // velocity gain of the hover PD
constexpr double kQuadKatt = 4.0; // attitude-error to body-rate gain

Vec quaternion_block(const Vec& x) { return x.segment(6, 4); }

// Operating region X for the hover scenario.  L_h and L_xdot are suprema over
// this box, and both scale the robust terms, so it hugs the regime the
// benchmark actually visits rather than the reachable set.
void quadrotor_domain(StateBox& domain) {
  domain.lower = Vec(10);
  domain.upper = Vec(10);
  domain.lower << -1.5, -1.5, 0.1, -2, -2, -2, -1, -1, -1, -1;
  domain.upper << 1.5, 1.5, 2, 2, 2, 2, 1, 1, 1, 1;
}

void check_quaternion(const Vec& q) {
  // Committed states are renormalized to 1e-16; the loose band here only
  // guards corruption while still admitting RK4 intermediate states, whose
  // norm drifts by O(dt * ||omega||) before renormalization.
  const double norm = q.norm();
  require(norm > 0.98 && norm < 1.02,
          "quadrotor_dynamics: quaternion norm far from 1");
}

}  // namespace

void PlantModel::validate() const {
  require(n > 0 && m > 0, "PlantModel: dimensions must be positive");
  require(static_cast<bool>(f) && static_cast<bool>(g),
          "PlantModel: dynamics must be set");
  require(input_box.dim() == m, "PlantModel: input box dimension mismatch");
  require(static_cast<int>(state_domain.lower.size()) == n,
          "PlantModel: state domain dimension mismatch");
}

void CruiseParams::validate() const {
  require(mass > 0 && zeta0 > 0 && zeta1 > 0 && zeta2 > 0,
          "CruiseParams: drag model parameters must be positive");
  require(lead_speed > 0 && headway > 0 && desired_speed > 0 && p_gain > 0,
          "CruiseParams: scenario parameters must be positive");
  require(input_limit > 0, "CruiseParams: input_limit must be positive");
}

void QuadrotorParams::validate() const {
  require(gravity > 0 && ground_effect_rho > 0 && rotor_radius > 0,
          "QuadrotorParams: physical parameters must be positive");
  require(altitude_headway > 0 && h1_scale > 0,
          "QuadrotorParams: altitude CBF parameters must be positive");
  require(thrust_max > 0 && omega_max > 0,
          "QuadrotorParams: input bounds must be positive");
  require(radius > 0 && alpha_q > 0,
          "QuadrotorParams: position CBF parameters must be positive");
  require(lambda > 0 && lambda < 0.5 * radius * radius,
          "QuadrotorParams: lambda must lie in (0, r^2/2)");
}

double ground_effect(const QuadrotorParams& p, double pz) {
  const double ratio = p.rotor_radius / (4.0 * pz);
  return 1.0 - p.ground_effect_rho * ratio * ratio;
}

double ground_effect_root(const QuadrotorParams& p) {
  return p.rotor_radius * std::sqrt(p.ground_effect_rho) / 4.0;
}

Mat quat_to_rotation(const Vec& q) {
  require(q.size() == 4, "quat_to_rotation: expected 4 components");
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat R(3, 3);
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec quat_multiply(const Vec& a, const Vec& b) {
  require(a.size() == 4 && b.size() == 4, "quat_multiply: expected 4 components");
  Vec out(4);
  out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
  out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
  out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
  out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
  return out;
}

std::pair<Vec, Mat> cruise_dynamics(const CruiseParams& p, const Vec& x) {
  require(x.size() == 2 && x.allFinite(), "cruise_dynamics: bad state");
  const double v = x[0];
  Vec f(2);
  f[0] = -(p.zeta0 + p.zeta1 * v + p.zeta2 * v * v) / p.mass;
  f[1] = p.lead_speed - v;
  Mat g(2, 1);
  g << 1.0 / p.mass, 0.0;
  return {f, g};
}

PlantModel make_cruise_plant(const CruiseParams& p) {
  p.validate();
  PlantModel plant;
  plant.n = 2;
  plant.m = 1;
  plant.name = "cruise";
  plant.f = [p](const Vec& x) { return cruise_dynamics(p, x).first; };
  plant.g = [p](const Vec& x) { return cruise_dynamics(p, x).second; };
  plant.xdot_monolithic = [p](const Vec& x, const Vec& u) {
    const double v = x[0];
    Vec out(2);
    out[0] = (u[0] - p.zeta0 - p.zeta1 * v - p.zeta2 * v * v) / p.mass;
    out[1] = p.lead_speed - v;
    return out;
  };
  plant.input_box.lower = Vec::Constant(1, -p.input_limit);
  plant.input_box.upper = Vec::Constant(1, p.input_limit);
  plant.state_domain.lower = Vec(2);
  plant.state_domain.upper = Vec(2);
  plant.state_domain.lower << 0.0, 0.0;
  plant.state_domain.upper << 40.0, 150.0;
  plant.xdot_bound = estimate_xdot_bound(plant, 20000, 0x5eed0001ULL);
  return plant;
}

CbfSpec cruise_cbf(const CruiseParams& p, double alpha_slope, double epsilon) {
  p.validate();
  CbfSpec cbf;
  const double headway = p.headway;
  cbf.h = [headway](const Vec& x) { return x[1] - headway * x[0]; };
  cbf.grad_h = [headway](const Vec& x) {
    (void)x;
    Vec g(2);
    g << -headway, 1.0;
    return g;
  };
  cbf.alpha = linear_alpha(alpha_slope);
  cbf.alpha_lipschitz = alpha_slope;
  cbf.epsilon = epsilon;
  cbf.h_lipschitz = std::sqrt(1.0 + headway * headway);
  cbf.name = "headway";
  cbf.validate();
  return cbf;
}

std::function<Vec(const Vec&)> cruise_nominal_controller(const CruiseParams& p) {
  p.validate();
  return [p](const Vec& x) {
    return Vec::Constant(1, -p.p_gain * (x[0] - p.desired_speed));
  };
}

std::pair<Vec, Mat> quadrotor_dynamics(const QuadrotorParams& p, const Vec& x) {
  require(x.size() == 10 && x.allFinite(), "quadrotor_dynamics: bad state");
  const Vec q = quaternion_block(x);
  check_quaternion(q);
  const double pz = x[2];
  const double zeta = ground_effect(p, pz);
  if (pz <= ground_effect_root(p) || zeta <= 0.0) {
    std::ostringstream msg;
    msg << "quadrotor_dynamics: altitude " << pz
        << " is outside the domain (thrust efficiency <= 0)";
    throw DomainError(msg.str());
  }

  Vec f = Vec::Zero(10);
  f.head(3) = x.segment(3, 3);
  f[5] = -p.gravity;

  Mat g = Mat::Zero(10, 4);
  const Mat R = quat_to_rotation(q);
  g.block(3, 0, 3, 1) = zeta * R.col(2);
  const double w = q[0], qx = q[1], qy = q[2], qz = q[3];
  g.block(6, 1, 4, 3) << -qx, -qy, -qz,
                          w, -qz, qy,
                          qz, w, -qx,
                         -qy, qx, w;
  g.block(6, 1, 4, 3) *= 0.5;
  return {f, g};
}

PlantModel make_quadrotor_plant(const QuadrotorParams& p) {
  p.validate();
  PlantModel plant;
  plant.n = 10;
  plant.m = 4;
  plant.name = "quadrotor";
  plant.renormalize_quaternion = true;
  plant.quaternion_offset = 6;
  plant.f = [p](const Vec& x) { return quadrotor_dynamics(p, x).first; };
  plant.g = [p](const Vec& x) { return quadrotor_dynamics(p, x).second; };
  plant.xdot_monolithic = [p](const Vec& x, const Vec& u) {
    const Vec q = quaternion_block(x);
    check_quaternion(q);
    const double zeta = ground_effect(p, x[2]);
    if (x[2] <= ground_effect_root(p) || zeta <= 0.0) {
      std::ostringstream msg;
      msg << "quadrotor xdot: altitude " << x[2]
          << " is outside the domain (thrust efficiency <= 0)";
      throw DomainError(msg.str());
    }
    Vec out(10);
    out.head(3) = x.segment(3, 3);
    const Mat R = quat_to_rotation(q);
    out.segment(3, 3) = zeta * R.col(2) * u[0];
    out[5] -= p.gravity;
    Vec omega_quat(4);
    omega_quat << 0.0, u[1], u[2], u[3];
    out.segment(6, 4) = 0.5 * quat_multiply(q, omega_quat);
    return out;
  };
  plant.input_box.lower = Vec(4);
  plant.input_box.upper = Vec(4);
  plant.input_box.lower << 0.0, -p.omega_max, -p.omega_max, -p.omega_max;
  plant.input_box.upper << p.thrust_max, p.omega_max, p.omega_max, p.omega_max;
  quadrotor_domain(plant.state_domain);
  plant.xdot_bound = estimate_xdot_bound(plant, 20000, 0x5eed0002ULL);
  return plant;
}

std::vector<CbfSpec> quadrotor_cbfs(const QuadrotorParams& p,
                                    double alpha_slope, double epsilon) {
  p.validate();
  std::vector<CbfSpec> cbfs(2);

  CbfSpec& altitude = cbfs[0];
  const double scale = p.h1_scale, tz = p.altitude_headway;
  altitude.h = [scale, tz](const Vec& x) { return scale * (x[2] - tz * x[5]); };
  altitude.grad_h = [scale, tz](const Vec& x) {
    (void)x;
    Vec g = Vec::Zero(10);
    g[2] = scale;
    g[5] = -scale * tz;
    return g;
  };
  altitude.alpha = linear_alpha(alpha_slope);
  altitude.alpha_lipschitz = alpha_slope;
  altitude.epsilon = epsilon;
  altitude.h_lipschitz = scale * std::sqrt(1.0 + tz * tz);
  altitude.name = "altitude";
  altitude.validate();

  CbfSpec& position = cbfs[1];
  const double r = p.radius, aq = p.alpha_q, lam = p.lambda;
  position.h = [r, aq, lam](const Vec& x) {
    const Vec pos = x.head(3), vel = x.segment(3, 3);
    const Mat R = quat_to_rotation(x.segment(6, 4));
    const double hp = r * r - pos.squaredNorm();
    return -2.0 * pos.dot(vel) + aq * hp -
           lam * (1.0 + pos.dot(R.col(2)) / r);
  };
  position.grad_h = [r, aq, lam](const Vec& x) {
    const Vec pos = x.head(3), vel = x.segment(3, 3);
    const double w = x[6], qx = x[7], qy = x[8], qz = x[9];
    const Mat R = quat_to_rotation(x.segment(6, 4));
    Vec g(10);
    g.head(3) = -2.0 * vel - 2.0 * aq * pos - (lam / r) * R.col(2);
    g.segment(3, 3) = -2.0 * pos;
    // d(pos . R e_z)/dq with R e_z = (2(xz+wy), 2(yz-wx), 1-2x^2-2y^2).
    g[6] = 2.0 * pos[0] * qy - 2.0 * pos[1] * qx;
    g[7] = 2.0 * pos[0] * qz - 2.0 * pos[1] * w - 4.0 * pos[2] * qx;
    g[8] = 2.0 * pos[0] * w + 2.0 * pos[1] * qz - 4.0 * pos[2] * qy;
    g[9] = 2.0 * pos[0] * qx + 2.0 * pos[1] * qy;
    g.tail(4) *= -(lam / r);
    return g;
  };
  position.alpha = linear_alpha(alpha_slope);
  position.alpha_lipschitz = alpha_slope;
  position.epsilon = epsilon;
  // The gradient is state-dependent, so L_h comes from a sampled bound.
  const PlantModel plant_for_box = [&] {
    PlantModel pm;
    pm.n = 10;
    quadrotor_domain(pm.state_domain);
    pm.renormalize_quaternion = true;
    pm.quaternion_offset = 6;
    return pm;
  }();
  position.h_lipschitz =
      estimate_h_lipschitz(plant_for_box, position.grad_h, 20000, 0x5eed0003ULL);
  position.name = "position";
  position.validate();

  return cbfs;
}

std::function<Vec(const Vec&)> quadrotor_nominal_controller(
    const QuadrotorParams& p, const Vec& setpoint) {
  p.validate();
  require(setpoint.size() == 3, "quadrotor nominal: setpoint must be a position");
  InputBox box;
  box.lower = Vec(4);
  box.upper = Vec(4);
  box.lower << 0.0, -p.omega_max, -p.omega_max, -p.omega_max;
  box.upper << p.thrust_max, p.omega_max, p.omega_max, p.omega_max;
  return [p, setpoint, box](const Vec& x) {
    const Vec pos = x.head(3), vel = x.segment(3, 3);
    const Mat R = quat_to_rotation(x.segment(6, 4));
    Vec accel_des = kQuadKp * (setpoint - pos) - kQuadKd * vel;
    accel_des[2] += p.gravity;
    const double zeta = std::max(ground_effect(p, x[2]), 1e-3);
    const double thrust = accel_des[2] / zeta;

    // Tilt the thrust axis toward the desired acceleration direction.
    Vec omega = Vec::Zero(3);
    const double anorm = accel_des.norm();
    if (anorm > 1e-9) {
      const Vec z_des = accel_des / anorm;
      const Vec z_cur = R.col(2);
      Vec axis_world(3);
      axis_world << z_cur[1] * z_des[2] - z_cur[2] * z_des[1],
          z_cur[2] * z_des[0] - z_cur[0] * z_des[2],
          z_cur[0] * z_des[1] - z_cur[1] * z_des[0];
      omega = kQuadKatt * (R.transpose() * axis_world);
    }

    Vec u(4);
    u[0] = thrust;
    u.tail(3) = omega;
    return box.clamp(u);
  };
}

Vec integrate_step(const PlantModel& plant, const Vec& x, const Vec& u,
                   double dt_int) {
  require(dt_int > 0.0, "integrate_step: dt_int must be positive");
  const Vec k1 = plant.xdot(x, u);
  const Vec k2 = plant.xdot(x + 0.5 * dt_int * k1, u);
  const Vec k3 = plant.xdot(x + 0.5 * dt_int * k2, u);
  const Vec k4 = plant.xdot(x + dt_int * k3, u);
  Vec next = x + (dt_int / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (plant.renormalize_quaternion) {
    auto q = next.segment(plant.quaternion_offset, 4);
    q /= q.norm();
  }
  if (!next.allFinite()) {
    std::ostringstream msg;
    msg << "integrate_step: non-finite state after step (plant=" << plant.name
        << ", x=[" << x.transpose() << "], u=[" << u.transpose()
        << "], dt_int=" << dt_int << ")";
    throw NumericalError(msg.str());
  }
  return next;
}

Vec sample_state(const PlantModel& plant, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = static_cast<int>(plant.state_domain.lower.size());
  Vec x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = plant.state_domain.lower[i] +
           unit(rng) * (plant.state_domain.upper[i] - plant.state_domain.lower[i]);
  }
  if (plant.renormalize_quaternion) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec q(4);
    do {
      for (int i = 0; i < 4; ++i) q[i] = gauss(rng);
    } while (q.norm() < 1e-3);
    x.segment(plant.quaternion_offset, 4) = q / q.norm();
  }
  return x;
}

Vec sample_input(const InputBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec u(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    u[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
  }
  return u;
}

double estimate_xdot_bound(const PlantModel& plant, int samples,
                           std::uint64_t seed) {
  require(samples > 0, "estimate_xdot_bound: samples must be positive");
  std::mt19937_64 rng(seed);
  double max_norm = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec x = sample_state(plant, rng);
    const Vec u = sample_input(plant.input_box, rng);
    max_norm = std::max(max_norm, plant.xdot(x, u).norm());
  }
  return 1.1 * max_norm;
}

double estimate_h_lipschitz(const PlantModel& plant,
                            const std::function<Vec(const Vec&)>& grad_h,
                            int samples, std::uint64_t seed) {
  require(samples > 0, "estimate_h_lipschitz: samples must be positive");
  std::mt19937_64 rng(seed);
  double max_norm = 0.0;
  for (int s = 0; s < samples; ++s) {
    max_norm = std::max(max_norm, grad_h(sample_state(plant, rng)).norm());
  }
  return 1.1 * max_norm;
}

}  // namespace gpcbf
