#include "gpclf/clf.hpp"

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace gpclf {

QuadraticCLF::QuadraticCLF(Eigen::MatrixXd P) : P_(std::move(P)) {
  if (P_.rows() != P_.cols() || P_.rows() == 0) throw std::invalid_argument("QuadraticCLF: P must be square");
  if ((P_ - P_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + P_.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("QuadraticCLF: P must be symmetric");
  P_ = 0.5 * (P_ + P_.transpose()).eval();
  min_eig_ = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P_, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (!(min_eig_ > 0.0)) throw std::invalid_argument("QuadraticCLF: P must be positive definite");
}

LieDerivatives lie_derivatives(const QuadraticCLF& clf, const ControlAffineSystem& sys, const Eigen::VectorXd& x) {
  const Eigen::VectorXd grad = clf.gradient(x);
  return {grad.dot(sys.f(x)), grad.transpose() * sys.g(x)};
}

double mismatch(const QuadraticCLF& clf, const ControlAffineSystem& plant, const ControlAffineSystem& nominal,
                const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const LieDerivatives t = lie_derivatives(clf, plant, x);
  const LieDerivatives n = lie_derivatives(clf, nominal, x);
  return (t.LfV - n.LfV) + (t.LgV - n.LgV).dot(u);
}

Linearization linearize(const ControlAffineSystem& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& u0) {
  const Eigen::Index n = sys.state_dim, m = sys.input_dim;
  Linearization lin{Eigen::MatrixXd(n, n), sys.g(x0)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x0(j)));
    Eigen::VectorXd xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    lin.A.col(j) = (sys.xdot(xp, u0) - sys.xdot(xm, u0)) / (2.0 * h);
  }
  if (lin.B.cols() != m) throw std::invalid_argument("linearize: g has the wrong shape");
  return lin;
}

bool stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  using Complex = std::complex<double>;
  const Eigen::Index n = A.rows();
  const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues();
  const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff()});
  for (Eigen::Index k = 0; k < n; ++k) {
    if (eig(k).real() < -tol) continue;
    // PBH: rank [A - lambda I, B] must be n for every unstable mode
    Eigen::MatrixXcd M(n, n + B.cols());
    M.leftCols(n) = A.cast<Complex>() - eig(k) * Eigen::MatrixXcd::Identity(n, n);
    M.rightCols(B.cols()) = B.cast<Complex>();
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXcd>(M).singularValues();
    if (sv(n - 1) <= 1e-8 * scale) return false;
  }
  return true;
}

double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd res = A.transpose() * P + P * A - P * B * R.llt().solve(B.transpose() * P) + Q;
  return res.cwiseAbs().maxCoeff();
}

namespace {

// Solves Ac^T X + X Ac = -S through the Kronecker form.
Eigen::MatrixXd lyapunov(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& S) {
  const Eigen::Index n = Ac.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd K(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) = Ac(j, i) * I;
      if (i == j) K.block(i * n, j * n, n, n) += Ac.transpose();
    }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(S.data(), n * n);
  const Eigen::VectorXd x = K.fullPivLu().solve(rhs);
  Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

bool hurwitz(const Eigen::MatrixXd& A) {
  return (Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().real().array() < 0.0).all();
}

}  // namespace

Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                           const Eigen::MatrixXd& R) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
    throw std::invalid_argument("solve_care: dimension mismatch");
  const Eigen::LLT<Eigen::MatrixXd> R_llt(R);
  if (R_llt.info() != Eigen::Success) throw std::invalid_argument("solve_care: R must be positive definite");
  if (!stabilizable(A, B)) throw std::invalid_argument("solve_care: (A, B) is not stabilizable");

  // matrix sign function of the Hamiltonian, with determinant scaling
  Eigen::MatrixXd Z(2 * n, 2 * n);
  Z << A, B * R_llt.solve(B.transpose()), Q, -A.transpose();
  const double dim = static_cast<double>(2 * n);
  for (int it = 0; it < 100; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(Z);
    const double c = std::pow(std::abs(lu.determinant()), -1.0 / dim);
    const Eigen::MatrixXd next = 0.5 * (c * Z + lu.inverse() / c);
    if (!next.allFinite()) throw std::runtime_error("solve_care: Hamiltonian has eigenvalues on the imaginary axis");
    const double change = (next - Z).norm();
    Z = next;
    if (change <= 1e-12 * Z.norm()) break;
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
  rhs << Z.topLeftCorner(n, n) + I, Z.bottomLeftCorner(n, n);
  Eigen::MatrixXd P = lhs.completeOrthogonalDecomposition().solve(rhs);
  P = 0.5 * (P + P.transpose()).eval();

  // Newton-Kleinman polish
  double res = care_residual(A, B, Q, R, P);
  for (int it = 0; it < 8 && res > 1e-14 * (1.0 + P.norm()); ++it) {
    const Eigen::MatrixXd K = R_llt.solve(B.transpose() * P);
    const Eigen::MatrixXd Ac = A - B * K;
    if (!hurwitz(Ac)) break;
    const Eigen::MatrixXd next = lyapunov(Ac, Q + K.transpose() * R * K);
    const double next_res = care_residual(A, B, Q, R, next);
    if (!(next_res < res)) break;
    P = next;
    res = next_res;
  }
  if (!P.allFinite() || !hurwitz(A - B * R_llt.solve(B.transpose() * P))) {
    std::ostringstream msg;
    msg << "solve_care: no stabilizing solution (residual " << res << ")";
    throw std::runtime_error(msg.str());
  }
  return P;
}

QuadraticCLF clf_from_lqr(const ControlAffineSystem& nominal, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Linearization lin =
      linearize(nominal, Eigen::VectorXd::Zero(nominal.state_dim), Eigen::VectorXd::Zero(nominal.input_dim));
  return QuadraticCLF(solve_care(lin.A, lin.B, Q, R));
}

ExponentialCheck verify_exponential_condition(const QuadraticCLF& clf, const ControlAffineSystem& sys,
                                              const Eigen::MatrixXd& samples, double lambda, const InputBox& U) {
  ExponentialCheck out;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    const Eigen::VectorXd x = samples.col(k);
    const LieDerivatives lie = lie_derivatives(clf, sys, x);
    double value = lie.LfV + lambda * clf.value(x);
    for (Eigen::Index i = 0; i < U.dim(); ++i)
      value += std::min(lie.LgV(i) * U.lower(i), lie.LgV(i) * U.upper(i));
    if (value > out.worst_violation) {
      out.worst_violation = value;
      out.worst_sample = k;
    }
  }
  out.ok = samples.cols() == 0 || out.worst_violation <= 0.0;
  return out;
}

SublevelSet::SublevelSet(QuadraticCLF clf, double level) : clf_(std::move(clf)), level_(level) {
  if (!(level > 0.0)) throw std::invalid_argument("SublevelSet: level must be positive");
}

Eigen::VectorXd SublevelSet::box_half_widths() const {
  // max x_i over x^T P x <= c is sqrt(c (P^{-1})_ii)
  const Eigen::MatrixXd Pinv = clf_.P().llt().solve(Eigen::MatrixXd::Identity(clf_.dim(), clf_.dim()));
  return (level_ * Pinv.diagonal()).cwiseSqrt();
}

Eigen::MatrixXd SublevelSet::sample_annulus(std::mt19937_64& rng, double lower, Eigen::Index count,
                                            Eigen::Index max_draws) const {
  const Eigen::VectorXd half = box_half_widths();
  const Eigen::Index n = clf_.dim();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::MatrixXd out(n, count);
  Eigen::Index got = 0;
  for (Eigen::Index draw = 0; draw < max_draws && got < count; ++draw) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = half(i) * unit(rng);
    const double v = clf_.value(x);
    if (v > lower && v <= level_) out.col(got++) = x;
  }
  if (got < count) {
    std::ostringstream msg;
    msg << "sample_annulus: only " << got << " of " << count << " samples in " << max_draws
        << " draws; increase the candidate pool";
    throw std::runtime_error(msg.str());
  }
  return out;
}

Eigen::MatrixXd SublevelSet::sample_interior(std::mt19937_64& rng, Eigen::Index count) const {
  return sample_annulus(rng, -1.0, count);
}

Eigen::MatrixXd SublevelSet::sample_boundary(std::mt19937_64& rng, Eigen::Index count) const {
  const Eigen::Index n = clf_.dim();
  const Eigen::LLT<Eigen::MatrixXd> llt(clf_.P());  // P = L L^T, so x = sqrt(c) L^{-T} d has V = c
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(n, count);
  for (Eigen::Index k = 0; k < count; ++k) {
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = normal(rng);
    d.normalize();
    out.col(k) = std::sqrt(level_) * llt.matrixU().solve(d);
  }
  return out;
}

}  // namespace gpclf
