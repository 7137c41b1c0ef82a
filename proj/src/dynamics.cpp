#include "gpclf/dynamics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "gpclf/clf.hpp"

namespace gpclf {

Eigen::VectorXd ControlAffineSystem::xdot(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return f(x) + g(x) * u;
}

InputBox InputBox::symmetric(Eigen::Index m, double bound) {
  return {Eigen::VectorXd::Constant(m, -bound), Eigen::VectorXd::Constant(m, bound)};
}

bool InputBox::contains(const Eigen::VectorXd& u, double tol) const {
  return u.size() == dim() && (u.array() >= lower.array() - tol).all() && (u.array() <= upper.array() + tol).all();
}

Eigen::VectorXd InputBox::clamp(const Eigen::VectorXd& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

void InputBox::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) throw std::invalid_argument("input box: bad dimensions");
  if ((lower.array() > 0.0).any() || (upper.array() < 0.0).any())
    throw std::invalid_argument("input box must contain 0");
}

void PendulumParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("pendulum: mass must be positive");
  if (!(length > 0.0)) throw std::invalid_argument("pendulum: length must be positive");
  if (!(damping >= 0.0)) throw std::invalid_argument("pendulum: damping must be non-negative");
}

PendulumFields pendulum_fields(const PendulumParams& p, const Eigen::Vector2d& x) {
  const double inertia = p.mass * p.length * p.length;
  PendulumFields out;
  out.f << x(1), p.gravity / p.length * std::sin(x(0)) - p.damping / inertia * x(1);
  out.g << 0.0, 1.0 / inertia;
  return out;
}

ControlAffineSystem pendulum(const PendulumParams& params) {
  params.validate();
  ControlAffineSystem sys;
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.f = [params](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return pendulum_fields(params, x.head<2>()).f;
  };
  sys.g = [params](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    return pendulum_fields(params, x.head<2>()).g;
  };
  return sys;
}

void BicycleParams::validate() const {
  if (!(b_v > 0.0) || !(b_gamma > 0.0)) throw std::invalid_argument("bicycle: input gains must be positive");
}

BicycleFields bicycle_fields(const BicycleParams& p, const Eigen::Matrix<double, 5, 1>& x) {
  const double v = x(2), theta = x(3), gamma = x(4);
  BicycleFields out;
  out.f << v * std::cos(theta), v * std::sin(theta), -p.f_mu, v * gamma, 0.0;
  out.g.setZero();
  out.g(2, 0) = p.b_v;
  out.g(4, 1) = p.b_gamma;
  return out;
}

ControlAffineSystem bicycle(const BicycleParams& params) {
  params.validate();
  ControlAffineSystem sys;
  sys.state_dim = 5;
  sys.input_dim = 2;
  sys.f = [params](const Eigen::VectorXd& x) -> Eigen::VectorXd { return bicycle_fields(params, x.head<5>()).f; };
  sys.g = [params](const Eigen::VectorXd& x) -> Eigen::MatrixXd { return bicycle_fields(params, x.head<5>()).g; };
  return sys;
}

ControlAffineSystem bicycle_tracking(const BicycleParams& params, double v_ref) {
  params.validate();
  ControlAffineSystem sys;
  sys.state_dim = 4;
  sys.input_dim = 2;
  sys.f = [params, v_ref](const Eigen::VectorXd& e) -> Eigen::VectorXd {
    const double v = e(1) + v_ref;
    Eigen::Vector4d f;
    f << v * std::sin(e(2)), -params.f_mu, v * e(3), 0.0;
    return f;
  };
  sys.g = [params](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    Eigen::Matrix<double, 4, 2> g = Eigen::Matrix<double, 4, 2>::Zero();
    g(1, 0) = params.b_v;
    g(3, 1) = params.b_gamma;
    return g;
  };
  return sys;
}

Eigen::Vector4d bicycle_error(const Eigen::Matrix<double, 5, 1>& x, double v_ref) {
  return {x(1), x(2) - v_ref, x(3), x(4)};
}

Eigen::VectorXd step_rk4(const ControlAffineSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_rk4: dt must be positive");
  const Eigen::VectorXd k1 = sys.xdot(x, u);
  const Eigen::VectorXd k2 = sys.xdot(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = sys.xdot(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = sys.xdot(x + dt * k3, u);
  Eigen::VectorXd next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw std::runtime_error("step_rk4: state became non-finite");
  return next;
}

std::size_t Trajectory::fallback_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.fallback ? 1 : 0;
  return n;
}

namespace {

void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void write_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.records.empty()) return;
  const Eigen::Index n = traj.records.front().x.size(), m = traj.records.front().u.size();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",u" << i;
  os << ",V,status\n";
  for (const auto& r : traj.records) {
    put(os, r.t);
    for (Eigen::Index i = 0; i < n; ++i) {
      os << ',';
      put(os, r.x(i));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      os << ',';
      put(os, r.u(i));
    }
    os << ',';
    put(os, r.V);
    os << ',' << (r.fallback ? "fallback_" : "") << to_string(r.status) << '\n';
  }
}

Trajectory rollout(const ControlAffineSystem& plant, const Controller& controller,
                   const std::function<double(const Eigen::VectorXd&)>& value, const Eigen::VectorXd& x0,
                   const RolloutOptions& options) {
  if (!(options.horizon > 0.0) || !(options.dt > 0.0))
    throw std::invalid_argument("rollout: horizon and dt must be positive");
  // guard against 1.0 / 0.01 landing just above 100
  const auto steps = static_cast<std::size_t>(std::ceil(options.horizon / options.dt - 1e-9));
  Trajectory traj;
  traj.records.reserve(steps + 1);
  traj.step_seconds.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const auto start = std::chrono::steady_clock::now();
    ControlOutput out = controller(x);
    traj.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (k == 0 && options.first_input.size() > 0) {
      out.u = options.first_input;
      out.slack = 0.0;
    }
    TrajectoryRecord rec;
    rec.t = static_cast<double>(k) * options.dt;
    rec.x = x;
    rec.u = out.u;
    rec.V = value ? value(x) : 0.0;
    rec.status = out.status;
    rec.fallback = out.fallback;
    rec.slack = out.slack;
    traj.records.push_back(std::move(rec));
    if (k < steps) x = step_rk4(plant, x, out.u, options.dt);
  }
  return traj;
}

Measurement make_measurement(const QuadraticCLF& clf, const ControlAffineSystem& nominal,
                             const Eigen::VectorXd& x_t, const Eigen::VectorXd& x_next, const Eigen::VectorXd& u_t,
                             double dt, double noise_std, std::mt19937_64* rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("make_measurement: dt must be positive");
  Measurement m;
  m.x = 0.5 * (x_t + x_next);
  m.u = u_t;
  const LieDerivatives lie = lie_derivatives(clf, nominal, m.x);
  m.z = (clf.value(x_next) - clf.value(x_t)) / dt - lie.vdot(u_t);
  if (noise_std > 0.0) {
    if (!rng) throw std::invalid_argument("make_measurement: noise requested without a generator");
    const double half_width = std::sqrt(3.0) * noise_std;
    m.z += std::uniform_real_distribution<double>(-half_width, half_width)(*rng);
  }
  return m;
}

}  // namespace gpclf
