#ifndef GPCBF_PLANTS_HPP
#define GPCBF_PLANTS_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gpcbf/cbf.hpp"
#include "gpcbf/types.hpp"

namespace gpcbf {

// Control-affine ground truth xdot = f(x) + g(x) u with a compact input box
// and a state-domain box used for sampling (grids, Lipschitz estimates).
struct PlantModel {
  int n = 0;
  int m = 0;
  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> g;
  // Monolithic xdot implementation kept alongside the (f, g) split so the
  // split can be cross-checked; both must agree to machine precision.
  std::function<Vec(const Vec&, const Vec&)> xdot_monolithic;
  InputBox input_box;
  StateBox state_domain;
  double xdot_bound = 0.0;  // L_xdot: sup over X x U of ||f + g u||
  bool renormalize_quaternion = false;
  int quaternion_offset = -1;  // index of the quaternion block, if any
  std::string name;

  // The monolithic form is preferred in hot loops; tests pin it to the
  // (f, g) split at machine precision.
  Vec xdot(const Vec& x, const Vec& u) const {
    if (xdot_monolithic) return xdot_monolithic(x, u);
    return f(x) + g(x) * u;
  }
  void validate() const;
};

struct CruiseParams {
  double mass = 1650.0;
  double zeta0 = 0.2;
  double zeta1 = 10.0;
  double zeta2 = 0.5;
  double lead_speed = 14.0;    // v0
  double headway = 1.8;        // T_h
  double desired_speed = 24.0; // v_d
  double p_gain = 10.0;
  double input_limit = 3.0e4;  // |u| bound on the wheel force
  void validate() const;
};

struct QuadrotorParams {
  double gravity = 9.81;
  double ground_effect_rho = 5.0;
  double rotor_radius = 0.09;
  double altitude_headway = 0.1;  // T_z in h1 = h1_scale (p_z - T_z v_z)
  double h1_scale = 10.0;
  double thrust_max = 15000.0;
  double omega_max = 5.0;      // body-rate box [-omega_max, omega_max]^3
  double radius = 2.0;         // r in the position CBF
  double alpha_q = 1.0;        // rate in h_e = h_p' + alpha_q h_p
  double lambda = 1.0;         // attitude shrink, must lie in (0, r^2/2)
  void validate() const;
};

// Thrust-efficiency factor zeta(p_z) = 1 - rho (r_rot / (4 p_z))^2; the
// dynamics domain requires zeta > 0, i.e. p_z > r_rot sqrt(rho) / 4.
double ground_effect(const QuadrotorParams& p, double pz);
double ground_effect_root(const QuadrotorParams& p);

// Rotation matrix of a unit quaternion (w, x, y, z), scalar first.
Mat quat_to_rotation(const Vec& q);
// Hamilton product of quaternions a, b (scalar first).
Vec quat_multiply(const Vec& a, const Vec& b);

// State (v, z): ego speed and gap to the lead vehicle. u is the wheel force.
std::pair<Vec, Mat> cruise_dynamics(const CruiseParams& p, const Vec& x);
PlantModel make_cruise_plant(const CruiseParams& p);
CbfSpec cruise_cbf(const CruiseParams& p, double alpha_slope, double epsilon);
std::function<Vec(const Vec&)> cruise_nominal_controller(const CruiseParams& p);

// State (p, v, q) in R^10 with unit quaternion q; inputs (T, omega) in R^4.
std::pair<Vec, Mat> quadrotor_dynamics(const QuadrotorParams& p, const Vec& x);
PlantModel make_quadrotor_plant(const QuadrotorParams& p);
std::vector<CbfSpec> quadrotor_cbfs(const QuadrotorParams& p,
                                    double alpha_slope, double epsilon);
// Cascaded PD hover controller toward setpoint: vertical PD plus gravity
// feedforward with ground-effect compensation at the measured altitude for
// thrust, attitude error mapped to body rates, saturated to the input box.
std::function<Vec(const Vec&)> quadrotor_nominal_controller(
    const QuadrotorParams& p, const Vec& setpoint);

// Classical RK4 step of xdot = f(x) + g(x) u with u held constant; the
// quaternion block is renormalized afterwards when the plant has one.
Vec integrate_step(const PlantModel& plant, const Vec& x, const Vec& u,
                   double dt_int);

// Uniform sample from the plant's state domain; quaternion blocks are drawn
// uniformly on the unit sphere instead of from the box.
Vec sample_state(const PlantModel& plant, std::mt19937_64& rng);
Vec sample_input(const InputBox& box, std::mt19937_64& rng);

// 1.1 x the sampled maximum of ||f + g u|| over X x U (sample count draws).
double estimate_xdot_bound(const PlantModel& plant, int samples,
                           std::uint64_t seed);
// 1.1 x the sampled maximum of the gradient norm over X, for CBFs whose
// gradient is not constant.
double estimate_h_lipschitz(const PlantModel& plant,
                            const std::function<Vec(const Vec&)>& grad_h,
                            int samples, std::uint64_t seed);

}  // namespace gpcbf

#endif  // GPCBF_PLANTS_HPP
