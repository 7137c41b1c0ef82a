#pragma once

#include <functional>

#include <Eigen/Dense>

#include "gpclf/clf.hpp"
#include "gpclf/conic_solver.hpp"
#include "gpclf/dynamics.hpp"
#include "gpclf/gp.hpp"

namespace gpclf {

struct ControllerConfig {
  /// exponential rate in Vdot + lambda V <= d
  double lambda = 0.5;
  /// p in u^T u + p d^2
  double slack_penalty = 1e3;
  InputBox U;
  double beta = 2.0;
  /// Applied when the solver does not return an optimal point. Empty means zero.
  Eigen::VectorXd fallback;
  SolverSettings solver;
  /// Called with the program and state of every failed solve.
  std::function<void(const ConicProgram&, const Eigen::VectorXd&)> on_failure;

  void validate() const;
};

/// min u^T u + p d^2  s.t.  LfV + LgV u + lambda V <= d,  u in U.
ControlOutput clf_qp(const ControlAffineSystem& model, const QuadraticCLF& clf, const ControllerConfig& cfg,
                     const Eigen::VectorXd& x);

/// Same objective with the chance constraint
///   LfV + LgV u + mu(x, u) + beta sigma(x, u) + lambda V <= d
/// where mu and sigma come from the ADP posterior (p = m + 1) and
/// sigma = ||M u + n|| makes the constraint a second-order cone.
ControlOutput gp_clf_socp(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                          const ControllerConfig& cfg, const Eigen::VectorXd& x);

/// Baseline that models the mismatch as a function of x alone (a p = 1 model
/// with unit augmented inputs): LfV is replaced by LfV + mu(x) + beta sigma(x).
ControlOutput gp_clf_qp_baseline(const ControlAffineSystem& nominal, const QuadraticCLF& clf,
                                 const GPModel& state_gp, const ControllerConfig& cfg, const Eigen::VectorXd& x);

/// The SOCP built by gp_clf_socp, over variables [u; d; t].
ConicProgram build_gp_clf_socp(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                               const ControllerConfig& cfg, const Eigen::VectorXd& x);

/// Left-hand side minus d of the GP chance constraint at (x, u, d), recomputed
/// from the posterior. Non-positive when the constraint holds.
double gp_constraint_margin(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                            double beta, double lambda, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                            double d);

}  // namespace gpclf
