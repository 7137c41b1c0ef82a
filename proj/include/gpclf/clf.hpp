#pragma once

#include <limits>
#include <random>

#include <Eigen/Dense>

#include "gpclf/dynamics.hpp"

namespace gpclf {

/// V(x) = x^T P x with P symmetric positive definite.
class QuadraticCLF {
public:
  explicit QuadraticCLF(Eigen::MatrixXd P);

  const Eigen::MatrixXd& P() const { return P_; }
  Eigen::Index dim() const { return P_.rows(); }
  double min_eigenvalue() const { return min_eig_; }

  template <typename Derived>
  double value(const Eigen::MatrixBase<Derived>& x) const {
    return x.dot(P_ * x);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return 2.0 * P_ * x; }

private:
  Eigen::MatrixXd P_;
  double min_eig_;
};

/// Vdot(x, u) = LfV + LgV u
struct LieDerivatives {
  double LfV = 0.0;
  Eigen::RowVectorXd LgV;

  double vdot(const Eigen::VectorXd& u) const { return LfV + LgV.dot(u); }
};

LieDerivatives lie_derivatives(const QuadraticCLF& clf, const ControlAffineSystem& sys, const Eigen::VectorXd& x);

/// True minus nominal Vdot; exactly affine in u.
double mismatch(const QuadraticCLF& clf, const ControlAffineSystem& plant, const ControlAffineSystem& nominal,
                const Eigen::VectorXd& x, const Eigen::VectorXd& u);

struct Linearization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

/// Jacobians of f(x) + g(x) u at (x0, u0) by central differences.
Linearization linearize(const ControlAffineSystem& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& u0);

/// Stabilizing solution of A^T P + P A - P B R^{-1} B^T P + Q = 0.
/// Throws std::invalid_argument when (A, B) is not stabilizable and
/// std::runtime_error when no stabilizing solution is found.
Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                           const Eigen::MatrixXd& R);

/// Largest absolute entry of the Riccati residual.
double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

bool stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol = 1e-9);

/// LQR quadratic for the linearization of `nominal` at the origin.
QuadraticCLF clf_from_lqr(const ControlAffineSystem& nominal, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

struct ExponentialCheck {
  bool ok = true;
  /// max over samples of inf_u Vdot + lambda V (<= 0 means satisfied)
  double worst_violation = -std::numeric_limits<double>::infinity();
  Eigen::Index worst_sample = -1;
};

/// Samples are the columns of `samples`. The infimum over the box is taken at
/// the vertex picked coordinate-wise by the sign of LgV.
ExponentialCheck verify_exponential_condition(const QuadraticCLF& clf, const ControlAffineSystem& sys,
                                              const Eigen::MatrixXd& samples, double lambda, const InputBox& U);

/// Omega_c = {x : V(x) <= c}.
class SublevelSet {
public:
  SublevelSet(QuadraticCLF clf, double level);

  double level() const { return level_; }
  const QuadraticCLF& clf() const { return clf_; }
  bool contains(const Eigen::VectorXd& x) const { return clf_.value(x) <= level_; }
  /// Half-widths of the axis-aligned box bounding the ellipsoid.
  Eigen::VectorXd box_half_widths() const;

  /// Uniform samples from {lower < V <= level} by rejection on the bounding box.
  /// Throws std::runtime_error when `max_draws` draws produce too few samples.
  Eigen::MatrixXd sample_annulus(std::mt19937_64& rng, double lower, Eigen::Index count,
                                 Eigen::Index max_draws = 1000000) const;
  Eigen::MatrixXd sample_interior(std::mt19937_64& rng, Eigen::Index count) const;
  /// Samples on the level surface V = level, with directions uniform on the sphere
  /// in the whitened coordinates P^{1/2} x.
  Eigen::MatrixXd sample_boundary(std::mt19937_64& rng, Eigen::Index count) const;

private:
  QuadraticCLF clf_;
  double level_;
};

}  // namespace gpclf
