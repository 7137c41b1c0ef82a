#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpclf/conic_solver.hpp"

namespace gpclf {

class QuadraticCLF;

/// xdot = f(x) + g(x) u
struct ControlAffineSystem {
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g;

  Eigen::VectorXd xdot(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

/// Box of admissible inputs.
struct InputBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static InputBox symmetric(Eigen::Index m, double bound);
  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Eigen::VectorXd& u, double tol = 0.0) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& u) const;
  void validate() const;
};

/// theta measured from upright; damping acts on theta_dot.
struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.81;
  double damping = 0.1;

  void validate() const;
};

struct PendulumFields {
  Eigen::Vector2d f;
  Eigen::Vector2d g;
};
PendulumFields pendulum_fields(const PendulumParams& params, const Eigen::Vector2d& x);
ControlAffineSystem pendulum(const PendulumParams& params);

struct BicycleParams {
  double f_mu = 0.0;
  double b_v = 1.0;
  double b_gamma = 1.0;

  void validate() const;
};

/// State [p_x, p_y, v, theta, gamma], input [speed, steering rate].
struct BicycleFields {
  Eigen::Matrix<double, 5, 1> f;
  Eigen::Matrix<double, 5, 2> g;
};
BicycleFields bicycle_fields(const BicycleParams& params, const Eigen::Matrix<double, 5, 1>& x);
ControlAffineSystem bicycle(const BicycleParams& params);

/// Tracking of the straight reference p_y = theta = gamma = 0, v = v_ref in
/// error coordinates e = [p_y, v - v_ref, theta, gamma]; p_x is dropped.
ControlAffineSystem bicycle_tracking(const BicycleParams& params, double v_ref = 5.0);
Eigen::Vector4d bicycle_error(const Eigen::Matrix<double, 5, 1>& x, double v_ref = 5.0);

/// One classical Runge-Kutta step with u held constant. Throws std::runtime_error
/// if the result is not finite.
Eigen::VectorXd step_rk4(const ControlAffineSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double dt);

/// What a feedback law returns at one state.
struct ControlOutput {
  Eigen::VectorXd u;
  double slack = 0.0;
  SolveStatus status = SolveStatus::optimal;
  /// True when the solver failed and the fallback input was applied.
  bool fallback = false;
};

using Controller = std::function<ControlOutput(const Eigen::VectorXd& x)>;

struct TrajectoryRecord {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double V = 0.0;
  SolveStatus status = SolveStatus::optimal;
  bool fallback = false;
  double slack = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  /// Wall time spent inside the controller per record (not part of the CSV).
  std::vector<double> step_seconds;

  std::size_t size() const { return records.size(); }
  std::size_t fallback_count() const;
};

/// Header t,x1..xn,u1..um,V,status; every number with 17 significant digits.
void write_csv(std::ostream& os, const Trajectory& traj);

struct RolloutOptions {
  double horizon = 1.0;
  double dt = 0.01;
  /// Applied instead of the controller output at the first step when non-empty.
  Eigen::VectorXd first_input;
};

/// ceil(horizon / dt) + 1 records. The controller is evaluated at every
/// record, including the last one, whose input is never applied.
Trajectory rollout(const ControlAffineSystem& plant, const Controller& controller,
                   const std::function<double(const Eigen::VectorXd&)>& value, const Eigen::VectorXd& x0,
                   const RolloutOptions& options);

struct Measurement {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double z = 0.0;
};

/// Midpoint state, held input, and finite-difference Vdot minus the nominal
/// prediction. Noise, when requested, is uniform with standard deviation noise_std.
Measurement make_measurement(const QuadraticCLF& clf, const ControlAffineSystem& nominal,
                             const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next, const Eigen::VectorXd& u_t,
                             double dt, double noise_std = 0.0, std::mt19937_64* rng = nullptr);

}  // namespace gpclf
