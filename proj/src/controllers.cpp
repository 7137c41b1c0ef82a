#include "gpclf/controllers.hpp"

#include <cmath>
#include <stdexcept>

namespace gpclf {

void ControllerConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("controller: lambda must be positive");
  if (!(slack_penalty > 0.0)) throw std::invalid_argument("controller: slack penalty must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("controller: beta must be non-negative");
  U.validate();
  if (fallback.size() > 0 && fallback.size() != U.dim())
    throw std::invalid_argument("controller: fallback input has the wrong size");
}

namespace {

ControlOutput failed(const ControllerConfig& cfg, SolveStatus status) {
  ControlOutput out;
  out.u = cfg.fallback.size() > 0 ? cfg.fallback : Eigen::VectorXd::Zero(cfg.U.dim());
  out.status = status;
  out.fallback = true;
  return out;
}

// min u^T u + p d^2 s.t. a u - d <= rhs, u in U; variables [u; d].
ControlOutput min_norm_qp(const Eigen::RowVectorXd& a, double rhs, const ControllerConfig& cfg,
                          const Eigen::VectorXd& x) {
  const Eigen::Index m = cfg.U.dim();
  Eigen::VectorXd h = Eigen::VectorXd::Constant(m + 1, 2.0);
  h(m) = 2.0 * cfg.slack_penalty;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(1 + 2 * m, m + 1);
  Eigen::VectorXd r(1 + 2 * m);
  G.row(0) << a, -1.0;
  r(0) = rhs;
  for (Eigen::Index i = 0; i < m; ++i) {
    G(1 + 2 * i, i) = 1.0;
    r(1 + 2 * i) = cfg.U.upper(i);
    G(2 + 2 * i, i) = -1.0;
    r(2 + 2 * i) = -cfg.U.lower(i);
  }
  const SolveResult res = solve_qp(h.asDiagonal(), Eigen::VectorXd::Zero(m + 1), G, r, cfg.solver);
  if (res.status != SolveStatus::optimal) {
    if (cfg.on_failure) {
      ConicProgram prog(m + 1);
      for (Eigen::Index i = 0; i < G.rows(); ++i) prog.add_linear(G.row(i), r(i));
      cfg.on_failure(prog, x);
    }
    return failed(cfg, res.status);
  }
  ControlOutput out;
  out.u = cfg.U.clamp(res.w.head(m));
  out.slack = res.w(m);
  out.status = res.status;
  return out;
}

}  // namespace

ControlOutput clf_qp(const ControlAffineSystem& model, const QuadraticCLF& clf, const ControllerConfig& cfg,
                     const Eigen::VectorXd& x) {
  const LieDerivatives lie = lie_derivatives(clf, model, x);
  return min_norm_qp(lie.LgV, -lie.LfV - cfg.lambda * clf.value(x), cfg, x);
}

ConicProgram build_gp_clf_socp(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                               const ControllerConfig& cfg, const Eigen::VectorXd& x) {
  const Eigen::Index m = cfg.U.dim();
  if (gp.kernel().p() != m + 1) throw std::invalid_argument("gp_clf_socp: model must have p = m + 1");
  const LieDerivatives lie = lie_derivatives(clf, nominal, x);
  const StructuredPosterior post = posterior_adp(gp, x);
  const ConeFactors cone = socp_factors(post);

  // variables w = [u; d; t]
  const Eigen::Index dim = m + 2;
  ConicProgram prog(dim);
  prog.c(m + 1) = 1.0;

  // ||diag(1, .., 1, sqrt(p)) [u; d]|| <= t
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, dim);
  A.topLeftCorner(m, m).setIdentity();
  A(m, m) = std::sqrt(cfg.slack_penalty);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  g(m + 1) = 1.0;
  prog.add_cone(A, Eigen::VectorXd::Zero(m + 1), g, 0.0);

  // beta ||M u + n|| <= d - (LfV + b0 + lambda V) - (LgV + b1^T) u
  Eigen::RowVectorXd gain = lie.LgV + post.b.tail(m).transpose();
  const double offset = lie.LfV + post.b(0) + cfg.lambda * clf.value(x);
  Eigen::VectorXd rhs_g = Eigen::VectorXd::Zero(dim);
  rhs_g.head(m) = -gain.transpose();
  rhs_g(m) = 1.0;
  const double scale = cfg.beta * std::max(cone.M.cwiseAbs().maxCoeff(), cone.n.cwiseAbs().maxCoeff());
  if (scale > 0.0) {
    Eigen::MatrixXd Ac = Eigen::MatrixXd::Zero(m + 1, dim);
    Ac.leftCols(m) = cfg.beta * cone.M;
    prog.add_cone(Ac, cfg.beta * cone.n, rhs_g, -offset);
  } else {
    prog.add_linear(-rhs_g.transpose(), -offset);
  }
  for (Eigen::Index i = 0; i < m; ++i) prog.add_bounds(i, cfg.U.lower(i), cfg.U.upper(i));
  return prog;
}

ControlOutput gp_clf_socp(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                          const ControllerConfig& cfg, const Eigen::VectorXd& x) {
  const ConicProgram prog = build_gp_clf_socp(nominal, clf, gp, cfg, x);
  const Eigen::Index m = cfg.U.dim();
  if (prog.cones.size() == 1) {
    // the uncertainty cone vanished (beta sigma = 0); row 0 of G is [gain, -1, 0]
    return min_norm_qp(prog.G.row(0).head(m), prog.r(0), cfg, x);
  }
  const SolveResult res = solve(prog, cfg.solver);
  if (res.status != SolveStatus::optimal) {
    if (cfg.on_failure) cfg.on_failure(prog, x);
    return failed(cfg, res.status);
  }
  ControlOutput out;
  out.u = cfg.U.clamp(res.w.head(m));
  out.slack = res.w(m);
  out.status = res.status;
  return out;
}

ControlOutput gp_clf_qp_baseline(const ControlAffineSystem& nominal, const QuadraticCLF& clf,
                                 const GPModel& state_gp, const ControllerConfig& cfg, const Eigen::VectorXd& x) {
  if (state_gp.kernel().p() != 1) throw std::invalid_argument("gp_clf_qp_baseline: model must have p = 1");
  const LieDerivatives lie = lie_derivatives(clf, nominal, x);
  const StructuredPosterior post = posterior_adp(state_gp, x);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  const double lf = lie.LfV + post.mean(one) + cfg.beta * post.stddev(one);
  return min_norm_qp(lie.LgV, -lf - cfg.lambda * clf.value(x), cfg, x);
}

double gp_constraint_margin(const ControlAffineSystem& nominal, const QuadraticCLF& clf, const GPModel& gp,
                            double beta, double lambda, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                            double d) {
  const LieDerivatives lie = lie_derivatives(clf, nominal, x);
  const StructuredPosterior post = posterior_adp(gp, x);
  Eigen::VectorXd y(u.size() + 1);
  y << 1.0, u;
  return lie.vdot(u) + post.mean(y) + beta * post.stddev(y) + lambda * clf.value(x) - d;
}

}  // namespace gpclf
