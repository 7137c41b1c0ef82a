#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gpclf {

enum class SolveStatus { optimal, infeasible, unbounded, max_iters, numerical_failure };

std::string to_string(SolveStatus status);

/// ||A w + b||_2 <= g^T w + h
struct SecondOrderCone {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd g;
  double h = 0.0;
};

/// minimize c^T w  subject to  second-order cones, G w <= r, A_eq w = b_eq.
struct ConicProgram {
  explicit ConicProgram(Eigen::Index dim);

  Eigen::Index dim() const { return c.size(); }

  void add_cone(SecondOrderCone cone);
  void add_cone(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& g, double h);
  /// row^T w <= rhs
  void add_linear(const Eigen::RowVectorXd& row, double rhs);
  /// lower <= w_i <= upper
  void add_bounds(Eigen::Index i, double lower, double upper);
  /// row^T w = rhs
  void add_equality(const Eigen::RowVectorXd& row, double rhs);

  /// Largest absolute constraint violation at w (0 when feasible).
  double max_violation(const Eigen::VectorXd& w) const;

  Eigen::VectorXd c;
  std::vector<SecondOrderCone> cones;
  Eigen::MatrixXd G;
  Eigen::VectorXd r;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
};

struct SolverSettings {
  double tol = 1e-8;
  int max_iters = 50;
  /// Constraint violation allowed for a result reported as optimal.
  double violation_tol = 1e-7;
  /// After reaching `tol`, iterate up to `refine_iters` more times towards
  /// `refine_tol`, returning the last iterate that still met `tol`.
  double refine_tol = 1e-13;
  int refine_iters = 6;
};

struct SolveResult {
  Eigen::VectorXd w;
  SolveStatus status = SolveStatus::numerical_failure;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
};

/// Primal-dual interior-point method on the homogeneous self-dual embedding,
/// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
/// Infeasibility and unboundedness are reported through `status`.
SolveResult solve(const ConicProgram& prog, const SolverSettings& settings = {});

/// minimize 1/2 w^T H w + q^T w  subject to  G w <= r.
/// Reduced to solve() through ||L^T w + L^{-1} q|| <= t with H = L L^T.
SolveResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& q, const Eigen::MatrixXd& G,
                     const Eigen::VectorXd& r, const SolverSettings& settings = {});

enum class Feasibility { feasible, infeasible, unknown };

struct FeasibilityResult {
  Feasibility status = Feasibility::unknown;
  Eigen::VectorXd witness;
};

/// Ignores prog.c and searches for any point satisfying every constraint.
FeasibilityResult check_feasibility(const ConicProgram& prog, const SolverSettings& settings = {});

/// Plain-text dump (matrix-market style blocks) for offline debugging.
void dump_problem(std::ostream& os, const ConicProgram& prog);

}  // namespace gpclf
