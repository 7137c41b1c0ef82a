#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace gpclf {

/// Anisotropic squared-exponential covariance on the state space.
///
/// k(x, x') = signal_variance * exp(-1/2 sum_d ((x_d - x'_d) / l_d)^2)
class SEKernel {
public:
  SEKernel(double signal_variance, Eigen::VectorXd lengthscales);

  /// Isotropic helper: every lengthscale equal to `lengthscale`.
  static SEKernel isotropic(Eigen::Index dim, double signal_variance, double lengthscale);

  double signal_variance() const { return signal_variance_; }
  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }
  Eigen::Index dim() const { return lengthscales_.size(); }

private:
  double signal_variance_;
  Eigen::VectorXd lengthscales_;
};

template <typename D1, typename D2>
double eval_base(const SEKernel& kernel, const Eigen::MatrixBase<D1>& x,
                 const Eigen::MatrixBase<D2>& x2) {
  if (x.size() != kernel.dim() || x2.size() != kernel.dim())
    throw std::invalid_argument("eval_base: state dimension does not match lengthscales");
  const double r2 = ((x - x2).array() / kernel.lengthscales().array()).square().sum();
  return kernel.signal_variance() * std::exp(-0.5 * r2);
}

/// Cross-covariance matrix K(i, j) = k(X.col(i), X2.col(j)).
Eigen::MatrixXd gram_base(const SEKernel& kernel, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& X2);
Eigen::MatrixXd gram_base(const SEKernel& kernel, const Eigen::MatrixXd& X);

/// Affine-dot-product compound kernel over (state, augmented input) pairs:
///
///   k_c((x, y), (x', y')) = y^T Diag(k_1(x, x'), ..., k_p(x, x')) y'
///
/// For control-affine targets y = [1, u^T]^T, so p = m + 1 and base kernel 0
/// models the drift part while base kernel i models the i-th input gain.
class ADPKernel {
public:
  explicit ADPKernel(std::vector<SEKernel> base_kernels);

  Eigen::Index p() const { return static_cast<Eigen::Index>(base_.size()); }
  Eigen::Index state_dim() const { return base_.front().dim(); }
  const SEKernel& base(Eigen::Index i) const { return base_[static_cast<std::size_t>(i)]; }
  const std::vector<SEKernel>& bases() const { return base_; }

  /// [k_1(x, x), ..., k_p(x, x)]; constant for stationary base kernels.
  Eigen::VectorXd prior_diagonal() const;

private:
  std::vector<SEKernel> base_;
};

template <typename DX, typename DY, typename DX2, typename DY2>
double eval_adp(const ADPKernel& kc, const Eigen::MatrixBase<DX>& x,
                const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DX2>& x2,
                const Eigen::MatrixBase<DY2>& y2) {
  if (y.size() != kc.p() || y2.size() != kc.p())
    throw std::invalid_argument("eval_adp: augmented input must have p entries");
  double value = 0.0;
  for (Eigen::Index i = 0; i < kc.p(); ++i) value += y(i) * eval_base(kc.base(i), x, x2) * y2(i);
  return value;
}

/// Gram matrix K_c = sum_i (y_i y_i^T) o K_i, with y_i^T the i-th row of Y.
Eigen::MatrixXd gram_adp(const ADPKernel& kc, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Cross-covariance between the data (X, Y) and query points (X2, Y2): N x N2.
Eigen::MatrixXd cross_adp(const ADPKernel& kc, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          const Eigen::MatrixXd& X2, const Eigen::MatrixXd& Y2);

}  // namespace gpclf
