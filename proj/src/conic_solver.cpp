#include "gpclf/conic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace gpclf {

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

ConicProgram::ConicProgram(Eigen::Index dim)
    : c(Eigen::VectorXd::Zero(dim)), G(0, dim), r(0), A_eq(0, dim), b_eq(0) {
  if (dim < 1) throw std::invalid_argument("ConicProgram: dimension must be positive");
}

void ConicProgram::add_cone(SecondOrderCone cone) {
  if (cone.A.cols() != dim() || cone.g.size() != dim() || cone.A.rows() != cone.b.size())
    throw std::invalid_argument("ConicProgram::add_cone: dimension mismatch");
  cones.push_back(std::move(cone));
}

void ConicProgram::add_cone(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& g,
                            double h) {
  add_cone(SecondOrderCone{A, b, g, h});
}

void ConicProgram::add_linear(const Eigen::RowVectorXd& row, double rhs) {
  if (row.size() != dim()) throw std::invalid_argument("ConicProgram::add_linear: dimension mismatch");
  G.conservativeResize(G.rows() + 1, Eigen::NoChange);
  r.conservativeResize(r.size() + 1);
  G.row(G.rows() - 1) = row;
  r(r.size() - 1) = rhs;
}

void ConicProgram::add_bounds(Eigen::Index i, double lower, double upper) {
  if (i < 0 || i >= dim()) throw std::invalid_argument("ConicProgram::add_bounds: index out of range");
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(dim());
  e(i) = 1.0;
  add_linear(e, upper);
  add_linear(-e, -lower);
}

void ConicProgram::add_equality(const Eigen::RowVectorXd& row, double rhs) {
  if (row.size() != dim()) throw std::invalid_argument("ConicProgram::add_equality: dimension mismatch");
  A_eq.conservativeResize(A_eq.rows() + 1, Eigen::NoChange);
  b_eq.conservativeResize(b_eq.size() + 1);
  A_eq.row(A_eq.rows() - 1) = row;
  b_eq(b_eq.size() - 1) = rhs;
}

double ConicProgram::max_violation(const Eigen::VectorXd& w) const {
  double v = 0.0;
  for (const auto& k : cones) v = std::max(v, (k.A * w + k.b).norm() - k.g.dot(w) - k.h);
  if (G.rows() > 0) v = std::max(v, (G * w - r).maxCoeff());
  if (A_eq.rows() > 0) v = std::max(v, (A_eq * w - b_eq).cwiseAbs().maxCoeff());
  return v;
}

namespace {

// Internal form: min c^T x  s.t.  A x = b,  G x + s = h,  s in R+^l x Q^{q_1} x ... x Q^{q_k}.
struct StandardForm {
  Eigen::MatrixXd A, G;
  Eigen::VectorXd b, h, c;
  Eigen::Index l = 0;
  std::vector<Eigen::Index> q;

  Eigen::Index degree() const { return l + static_cast<Eigen::Index>(q.size()); }
};

StandardForm to_standard(const ConicProgram& prog, const Eigen::VectorXd& c) {
  StandardForm sf;
  const Eigen::Index d = prog.dim();
  // |a'x + b| <= g'x + h is the pair of half-spaces (g -/+ a)'x + h -/+ b >= 0;
  // as a cone its scaling degenerates near the boundary
  Eigen::Index pairs = 0, soc_rows = 0;
  for (const auto& k : prog.cones) (k.A.rows() == 1 ? pairs : soc_rows) += 1 + k.A.rows();
  const Eigen::Index rows = prog.G.rows() + pairs + soc_rows;
  sf.G.resize(rows, d);
  sf.h.resize(rows);
  sf.l = prog.G.rows() + pairs;
  sf.G.topRows(prog.G.rows()) = prog.G;
  sf.h.head(prog.G.rows()) = prog.r;
  Eigen::Index lp = prog.G.rows(), row = sf.l;
  for (const auto& k : prog.cones) {
    double h = k.h;
    // a cone whose right-hand side is identically zero has no interior point
    if (k.g.isZero(0.0) && h == 0.0) h = 1e-12;
    if (k.A.rows() == 1) {
      for (double sign : {1.0, -1.0}) {
        sf.G.row(lp) = sign * k.A.row(0) - k.g.transpose();
        sf.h(lp) = h - sign * k.b(0);
        ++lp;
      }
      continue;
    }
    const Eigen::Index len = 1 + k.A.rows();
    sf.G.row(row) = -k.g.transpose();
    sf.h(row) = h;
    sf.G.block(row + 1, 0, k.A.rows(), d) = -k.A;
    sf.h.segment(row + 1, k.A.rows()) = k.b;
    sf.q.push_back(len);
    row += len;
  }
  sf.A = prog.A_eq;
  sf.b = prog.b_eq;
  sf.c = c;
  return sf;
}

// x0^2 - |x1|^2 as a product, which keeps its relative accuracy near the boundary.
template <typename V>
double cone_det(const V& v) {
  const double r = v.tail(v.size() - 1).norm();
  return (v(0) - r) * (v(0) + r);
}

// Cone arithmetic over the product cone layout [LP | SOC_1 | ... | SOC_k].
class ConeAlgebra {
public:
  explicit ConeAlgebra(const StandardForm& sf) : l_(sf.l), q_(sf.q) {}

  Eigen::VectorXd identity(Eigen::Index m) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e.head(l_).setOnes();
    Eigen::Index off = l_;
    for (auto len : q_) {
      e(off) = 1.0;
      off += len;
    }
    return e;
  }

  // Smallest spectral value over all blocks.
  double min_eigenvalue(const Eigen::VectorXd& v) const {
    double m = std::numeric_limits<double>::infinity();
    if (l_ > 0) m = v.head(l_).minCoeff();
    Eigen::Index off = l_;
    for (auto len : q_) {
      m = std::min(m, v(off) - v.segment(off + 1, len - 1).norm());
      off += len;
    }
    return m;
  }

  Eigen::VectorXd shift_into_interior(const Eigen::VectorXd& v) const {
    const double alpha = -min_eigenvalue(v);
    if (alpha < -1e-12) return v;
    return v + (1.0 + alpha) * identity(v.size());
  }

  Eigen::VectorXd circ(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::VectorXd w(u.size());
    w.head(l_) = u.head(l_).cwiseProduct(v.head(l_));
    Eigen::Index off = l_;
    for (auto len : q_) {
      const auto us = u.segment(off, len), vs = v.segment(off, len);
      w(off) = us.dot(vs);
      w.segment(off + 1, len - 1) = us(0) * vs.tail(len - 1) + vs(0) * us.tail(len - 1);
      off += len;
    }
    return w;
  }

  // Solves lambda o x = v.
  Eigen::VectorXd ldiv(const Eigen::VectorXd& lambda, const Eigen::VectorXd& v) const {
    Eigen::VectorXd x(v.size());
    x.head(l_) = v.head(l_).cwiseQuotient(lambda.head(l_));
    Eigen::Index off = l_;
    for (auto len : q_) {
      const auto ls = lambda.segment(off, len), vs = v.segment(off, len);
      const double l0 = ls(0);
      const double det = cone_det(ls);
      const double x0 = (l0 * vs(0) - ls.tail(len - 1).dot(vs.tail(len - 1))) / det;
      x(off) = x0;
      x.segment(off + 1, len - 1) = (vs.tail(len - 1) - x0 * ls.tail(len - 1)) / l0;
      off += len;
    }
    return x;
  }

  // Largest alpha with v + alpha dv in the cone (infinity when unrestricted).
  double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < l_; ++i)
      if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    Eigen::Index off = l_;
    for (auto len : q_) {
      const double x0 = v(off), d0 = dv(off);
      const auto x1 = v.segment(off + 1, len - 1), d1 = dv.segment(off + 1, len - 1);
      const double a = d0 * d0 - d1.squaredNorm();
      const double b = 2.0 * (x0 * d0 - x1.dot(d1));
      const double c = std::max(cone_det(v.segment(off, len)), 0.0);
      double root = std::numeric_limits<double>::infinity();
      if (d0 < 0.0) root = -x0 / d0;
      if (std::abs(a) < 1e-300) {
        if (b < 0.0) root = std::min(root, -c / b);
      } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          // numerically stable pair of roots
          const double qv = -0.5 * (b + std::copysign(sq, b));
          for (double rt : {qv / a, qv != 0.0 ? c / qv : std::numeric_limits<double>::infinity()})
            if (rt > 0.0) root = std::min(root, rt);
        }
      }
      alpha = std::min(alpha, root);
      off += len;
    }
    return alpha;
  }

  // Nesterov-Todd scaling W (symmetric) with W z = W^{-1} s.
  Eigen::MatrixXd nt_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z) const {
    const Eigen::Index m = s.size();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < l_; ++i) W(i, i) = std::sqrt(s(i) / z(i));
    Eigen::Index off = l_;
    for (auto len : q_) {
      const auto ss = s.segment(off, len), zs = z.segment(off, len);
      const double s_res = std::max(cone_det(ss), 1e-300);
      const double z_res = std::max(cone_det(zs), 1e-300);
      const Eigen::VectorXd sb = ss / std::sqrt(s_res);
      const Eigen::VectorXd zb = zs / std::sqrt(z_res);
      const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
      Eigen::VectorXd wb(len);
      wb(0) = (sb(0) + zb(0)) / (2.0 * gamma);
      wb.tail(len - 1) = (sb.tail(len - 1) - zb.tail(len - 1)) / (2.0 * gamma);
      const double eta = std::pow(s_res / z_res, 0.25);
      auto Wb = W.block(off, off, len, len);
      Wb(0, 0) = wb(0);
      Wb.block(0, 1, 1, len - 1) = wb.tail(len - 1).transpose();
      Wb.block(1, 0, len - 1, 1) = wb.tail(len - 1);
      Wb.block(1, 1, len - 1, len - 1) =
          Eigen::MatrixXd::Identity(len - 1, len - 1) +
          wb.tail(len - 1) * wb.tail(len - 1).transpose() / (1.0 + wb(0));
      Wb *= eta;
      off += len;
    }
    return W;
  }

private:
  Eigen::Index l_;
  std::vector<Eigen::Index> q_;
};

// Regularized LU of the KKT matrix with iterative refinement against the exact one.
class KKTSolver {
public:
  KKTSolver(const StandardForm& sf, const Eigen::MatrixXd& W2) {
    const Eigen::Index n = sf.c.size(), p = sf.A.rows(), m = sf.G.rows();
    K_ = Eigen::MatrixXd::Zero(n + p + m, n + p + m);
    K_.block(0, n, n, p) = sf.A.transpose();
    K_.block(0, n + p, n, m) = sf.G.transpose();
    K_.block(n, 0, p, n) = sf.A;
    K_.block(n + p, 0, m, n) = sf.G;
    K_.block(n + p, n + p, m, m) = -W2;
    Eigen::MatrixXd Kreg = K_;
    constexpr double delta = 1e-11;
    Kreg.diagonal().head(n).array() += delta;
    Kreg.diagonal().tail(p + m).array() -= delta;
    lu_.compute(Kreg);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = lu_.solve(rhs);
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd res = rhs - K_ * x;
      if (res.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      x += lu_.solve(res);
    }
    return x;
  }

private:
  Eigen::MatrixXd K_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

struct Direction {
  Eigen::VectorXd x, y, z, s;
  double tau = 0.0, kappa = 0.0;
};

bool all_finite(const Direction& d) {
  return d.x.allFinite() && d.y.allFinite() && d.z.allFinite() && d.s.allFinite() &&
         std::isfinite(d.tau) && std::isfinite(d.kappa);
}

}  // namespace

SolveResult solve(const ConicProgram& prog, const SolverSettings& settings) {
  if (!(settings.tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
  if (prog.G.rows() == 0 && prog.cones.empty())
    throw std::invalid_argument("solve: need at least one inequality or cone constraint");

  const StandardForm sf = to_standard(prog, prog.c);
  const ConeAlgebra cone(sf);
  const Eigen::Index n = sf.c.size(), p = sf.A.rows(), m = sf.G.rows();
  const double D = static_cast<double>(sf.degree());
  const Eigen::VectorXd e = cone.identity(m);

  const double nb = std::max(1.0, sf.b.size() ? sf.b.norm() : 0.0);
  const double nh = std::max(1.0, sf.h.norm());
  const double nc = std::max(1.0, sf.c.norm());

  // initial point from two least-squares problems with W = I
  Eigen::VectorXd x, y, z, s;
  {
    const KKTSolver kkt(sf, Eigen::MatrixXd::Identity(m, m));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p + m);
    rhs.segment(n, p) = sf.b;
    rhs.tail(m) = sf.h;
    const Eigen::VectorXd primal = kkt.solve(rhs);
    x = primal.head(n);
    s = cone.shift_into_interior(-primal.tail(m));
    rhs.setZero();
    rhs.head(n) = -sf.c;
    const Eigen::VectorXd dual = kkt.solve(rhs);
    y = dual.segment(n, p);
    z = cone.shift_into_interior(dual.tail(m));
  }
  double tau = 1.0, kappa = 1.0;

  SolveResult result;
  result.status = SolveStatus::max_iters;

  auto finish = [&](SolveStatus status, int iters) {
    result.status = status;
    result.iterations = iters;
    if (status == SolveStatus::infeasible) {
      result.w = Eigen::VectorXd::Zero(n);
      result.objective = std::numeric_limits<double>::infinity();
    } else if (status == SolveStatus::unbounded) {
      result.w = x;
      result.objective = -std::numeric_limits<double>::infinity();
    } else {
      result.w = x / tau;
      result.objective = sf.c.dot(result.w);
    }
    if (status == SolveStatus::optimal && prog.max_violation(result.w) > settings.violation_tol)
      result.status = SolveStatus::numerical_failure;
    return result;
  };

  std::optional<SolveResult> best;
  bool refined = false;
  int refine_stop = 0;
  auto bail = [&](SolveStatus status, int iter) { return best ? *best : finish(status, iter); };

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd rx = sf.A.transpose() * y + sf.G.transpose() * z + sf.c * tau;
    const Eigen::VectorXd ry = -sf.A * x + sf.b * tau;
    const Eigen::VectorXd rz = -sf.G * x + sf.h * tau - s;
    const double rtau = -sf.c.dot(x) - sf.b.dot(y) - sf.h.dot(z) - kappa;
    const double mu = (s.dot(z) + tau * kappa) / (D + 1.0);

    const double pres = std::max(ry.norm() / nb, rz.norm() / nh) / tau;
    const double dres = rx.norm() / nc / tau;
    const double pcost = sf.c.dot(x) / tau;
    const double dcost = -(sf.b.dot(y) + sf.h.dot(z)) / tau;
    const double gap = s.dot(z) / (tau * tau);
    result.primal_residual = pres;
    result.dual_residual = dres;
    result.gap = gap;

    auto converged = [&](double tol) {
      return pres < tol && dres < tol && gap < tol * (1.0 + std::abs(pcost)) &&
             std::abs(pcost - dcost) < tol * (1.0 + std::abs(pcost));
    };
    if (converged(settings.tol)) {
      // keep going for a few steps: the minimizer converges like sqrt(gap)
      // when the objective is a norm, so a tighter gap buys real accuracy
      SolveResult snapshot = finish(SolveStatus::optimal, iter);
      if (snapshot.status == SolveStatus::optimal) {
        if (gap < settings.refine_tol * (1.0 + std::abs(pcost)) || (refined && iter >= refine_stop)) return snapshot;
        best = std::move(snapshot);
      }
    } else if (refined) {
      return *best;
    }
    if (best && !refined) {
      refined = true;
      refine_stop = iter + settings.refine_iters;
    }

    const double dual_ray = -(sf.b.dot(y) + sf.h.dot(z));
    if (dual_ray > 0.0) {
      const double cert = (sf.A.transpose() * y + sf.G.transpose() * z).norm() / dual_ray;
      if (cert < settings.tol && tau < kappa) return finish(SolveStatus::infeasible, iter);
    }
    const double primal_ray = -sf.c.dot(x);
    if (primal_ray > 0.0) {
      const double cert = std::max((sf.A * x).norm(), (sf.G * x + s).norm()) / primal_ray;
      if (cert < settings.tol && tau < kappa) return finish(SolveStatus::unbounded, iter);
    }
    if (iter >= settings.max_iters) return bail(SolveStatus::max_iters, iter);

    const Eigen::MatrixXd W = cone.nt_scaling(s, z);
    const Eigen::VectorXd lambda = W * z;
    const KKTSolver kkt(sf, W * W);

    Eigen::VectorXd rhs1(n + p + m);
    rhs1 << -sf.c, sf.b, sf.h;
    const Eigen::VectorXd xi1 = kkt.solve(rhs1);
    const double S1 = sf.c.dot(xi1.head(n)) + sf.b.dot(xi1.segment(n, p)) + sf.h.dot(xi1.tail(m));

    auto direction = [&](double sigma_keep, const Eigen::VectorXd& ds, double dkappa) {
      Eigen::VectorXd rhs(n + p + m);
      rhs << -sigma_keep * rx, sigma_keep * ry, sigma_keep * rz + W * cone.ldiv(lambda, ds);
      const Eigen::VectorXd xi2 = kkt.solve(rhs);
      const double S2 = sf.c.dot(xi2.head(n)) + sf.b.dot(xi2.segment(n, p)) + sf.h.dot(xi2.tail(m));
      Direction d;
      d.tau = (-sigma_keep * rtau - dkappa / tau + S2) / (kappa / tau - S1);
      const Eigen::VectorXd sol = xi2 + d.tau * xi1;
      d.x = sol.head(n);
      d.y = sol.segment(n, p);
      d.z = sol.tail(m);
      d.s = -W * (cone.ldiv(lambda, ds) + W * d.z);
      d.kappa = -(dkappa + kappa * d.tau) / tau;
      return d;
    };
    auto step_length = [&](const Direction& d) {
      double a = std::min(cone.max_step(s, d.s), cone.max_step(z, d.z));
      if (d.tau < 0.0) a = std::min(a, -tau / d.tau);
      if (d.kappa < 0.0) a = std::min(a, -kappa / d.kappa);
      return a;
    };

    // predictor
    const Direction aff = direction(1.0, cone.circ(lambda, lambda), kappa * tau);
    if (!all_finite(aff)) return bail(SolveStatus::numerical_failure, iter);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

    // corrector
    const Eigen::VectorXd ws_aff = -lambda - W * aff.z;  // W^{-1} ds_aff
    const Eigen::VectorXd ds = cone.circ(lambda, lambda) + cone.circ(ws_aff, W * aff.z) - sigma * mu * e;
    const double dkappa = kappa * tau + aff.kappa * aff.tau - sigma * mu;
    const Direction d = direction(1.0 - sigma, ds, dkappa);
    if (!all_finite(d)) return bail(SolveStatus::numerical_failure, iter);
    const double alpha = std::min(1.0, 0.99 * step_length(d));
    if (alpha < 1e-12) return bail(SolveStatus::numerical_failure, iter);

    x += alpha * d.x;
    y += alpha * d.y;
    z += alpha * d.z;
    s += alpha * d.s;
    tau += alpha * d.tau;
    kappa += alpha * d.kappa;
  }
}

namespace {

// Re-solve the equality-constrained QP on the active set guessed from the
// interior-point solution. Kept only if it is feasible, dual feasible and no worse.
void polish_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& q, const Eigen::MatrixXd& G,
               const Eigen::VectorXd& r, SolveResult& res) {
  const Eigen::Index d = H.rows();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    if (r(i) - G.row(i).dot(res.w) < 1e-6 * (1.0 + std::abs(r(i)))) active.push_back(i);
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k > d) return;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d + k, d + k);
  Eigen::VectorXd rhs(d + k);
  K.topLeftCorner(d, d) = H;
  rhs.head(d) = -q;
  for (Eigen::Index a = 0; a < k; ++a) {
    K.block(d + a, 0, 1, d) = G.row(active[a]);
    K.block(0, d + a, d, 1) = G.row(active[a]).transpose();
    rhs(d + a) = r(active[a]);
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) return;
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) return;
  if (k > 0 && sol.tail(k).minCoeff() < -1e-9) return;
  const Eigen::VectorXd w = sol.head(d);
  if (G.rows() > 0 && ((G * w - r).array() > 1e-9 * (1.0 + r.array().abs())).any()) return;
  const double obj = 0.5 * w.dot(H * w) + q.dot(w);
  if (obj > res.objective + 1e-9 * (1.0 + std::abs(res.objective))) return;
  res.w = w;
  res.objective = obj;
}

}  // namespace

SolveResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& q, const Eigen::MatrixXd& G,
                     const Eigen::VectorXd& r, const SolverSettings& settings) {
  const Eigen::Index d = H.rows();
  if (H.cols() != d || q.size() != d || G.cols() != d || G.rows() != r.size())
    throw std::invalid_argument("solve_qp: dimension mismatch");
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("solve_qp: H must be positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::VectorXd Linv_q = llt.matrixL().solve(q);

  // variables [w; t]: minimize t  s.t.  ||L^T w + L^{-1} q|| <= t,  G w <= r
  ConicProgram prog(d + 1);
  prog.c(d) = 1.0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d + 1);
  A.leftCols(d) = L.transpose();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d + 1);
  g(d) = 1.0;
  prog.add_cone(A, Linv_q, g, 0.0);
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(d + 1);
    row.head(d) = G.row(i);
    prog.add_linear(row, r(i));
  }
  SolveResult res = solve(prog, settings);
  if (res.status == SolveStatus::infeasible) {
    res.w = Eigen::VectorXd::Zero(d);
    return res;
  }
  res.w = res.w.head(d).eval();
  res.objective = 0.5 * res.w.dot(H * res.w) + q.dot(res.w);
  if (res.status == SolveStatus::optimal) polish_qp(H, q, G, r, res);
  return res;
}

FeasibilityResult check_feasibility(const ConicProgram& prog, const SolverSettings& settings) {
  ConicProgram zero = prog;
  zero.c.setZero();
  const SolveResult res = solve(zero, settings);
  FeasibilityResult out;
  switch (res.status) {
    case SolveStatus::optimal:
      out.status = Feasibility::feasible;
      out.witness = res.w;
      break;
    case SolveStatus::infeasible: out.status = Feasibility::infeasible; break;
    default: out.status = Feasibility::unknown; break;
  }
  return out;
}

namespace {

void dump_matrix(std::ostream& os, const std::string& name, const Eigen::MatrixXd& M) {
  os << "%% " << name << "\n" << M.rows() << " " << M.cols() << "\n";
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) os << M(i, j) << "\n";
}

}  // namespace

void dump_problem(std::ostream& os, const ConicProgram& prog) {
  const auto precision = os.precision(17);
  os << "%%ConicProgram dim " << prog.dim() << " cones " << prog.cones.size() << "\n";
  dump_matrix(os, "c", prog.c);
  for (std::size_t k = 0; k < prog.cones.size(); ++k) {
    const auto& cone = prog.cones[k];
    const std::string tag = "cone" + std::to_string(k);
    dump_matrix(os, tag + ".A", cone.A);
    dump_matrix(os, tag + ".b", cone.b);
    dump_matrix(os, tag + ".g", cone.g);
    dump_matrix(os, tag + ".h", Eigen::VectorXd::Constant(1, cone.h));
  }
  dump_matrix(os, "G", prog.G);
  dump_matrix(os, "r", prog.r);
  dump_matrix(os, "A_eq", prog.A_eq);
  dump_matrix(os, "b_eq", prog.b_eq);
  os.precision(precision);
}

}  // namespace gpclf
