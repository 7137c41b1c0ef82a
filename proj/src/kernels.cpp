#include "gpclf/kernels.hpp"

#include <string>

namespace gpclf {

SEKernel::SEKernel(double signal_variance, Eigen::VectorXd lengthscales)
    : signal_variance_(signal_variance), lengthscales_(std::move(lengthscales)) {
  if (!(signal_variance_ > 0.0) || !std::isfinite(signal_variance_))
    throw std::invalid_argument("SEKernel: signal variance must be positive");
  if (lengthscales_.size() == 0)
    throw std::invalid_argument("SEKernel: at least one lengthscale required");
  for (Eigen::Index d = 0; d < lengthscales_.size(); ++d)
    if (!(lengthscales_(d) > 0.0) || !std::isfinite(lengthscales_(d)))
      throw std::invalid_argument("SEKernel: lengthscale " + std::to_string(d) + " must be positive");
}

SEKernel SEKernel::isotropic(Eigen::Index dim, double signal_variance, double lengthscale) {
  return SEKernel(signal_variance, Eigen::VectorXd::Constant(dim, lengthscale));
}

Eigen::MatrixXd gram_base(const SEKernel& kernel, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& X2) {
  if (X.rows() != kernel.dim() || X2.rows() != kernel.dim())
    throw std::invalid_argument("gram_base: state dimension does not match lengthscales");
  const Eigen::ArrayXd inv_l = kernel.lengthscales().array().inverse();
  const Eigen::MatrixXd A = inv_l.matrix().asDiagonal() * X;
  const Eigen::MatrixXd B = inv_l.matrix().asDiagonal() * X2;
  Eigen::MatrixXd K(X.cols(), X2.cols());
  for (Eigen::Index j = 0; j < X2.cols(); ++j)
    for (Eigen::Index i = 0; i < X.cols(); ++i)
      K(i, j) = kernel.signal_variance() * std::exp(-0.5 * (A.col(i) - B.col(j)).squaredNorm());
  return K;
}

Eigen::MatrixXd gram_base(const SEKernel& kernel, const Eigen::MatrixXd& X) {
  if (X.rows() != kernel.dim())
    throw std::invalid_argument("gram_base: state dimension does not match lengthscales");
  const Eigen::MatrixXd A = kernel.lengthscales().array().inverse().matrix().asDiagonal() * X;
  const Eigen::Index N = X.cols();
  Eigen::MatrixXd K(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    K(j, j) = kernel.signal_variance();
    for (Eigen::Index i = j + 1; i < N; ++i) {
      K(i, j) = kernel.signal_variance() * std::exp(-0.5 * (A.col(i) - A.col(j)).squaredNorm());
      K(j, i) = K(i, j);
    }
  }
  return K;
}

ADPKernel::ADPKernel(std::vector<SEKernel> base_kernels) : base_(std::move(base_kernels)) {
  if (base_.empty()) throw std::invalid_argument("ADPKernel: need at least one base kernel");
  for (const auto& k : base_)
    if (k.dim() != base_.front().dim())
      throw std::invalid_argument("ADPKernel: base kernels disagree on state dimension");
}

Eigen::VectorXd ADPKernel::prior_diagonal() const {
  Eigen::VectorXd d(p());
  for (Eigen::Index i = 0; i < p(); ++i) d(i) = base(i).signal_variance();
  return d;
}

Eigen::MatrixXd gram_adp(const ADPKernel& kc, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.cols() != Y.cols())
    throw std::invalid_argument("gram_adp: X and Y column counts differ");
  if (Y.rows() != kc.p()) throw std::invalid_argument("gram_adp: Y must have p rows");
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index i = 0; i < kc.p(); ++i) {
    const Eigen::RowVectorXd yi = Y.row(i);
    K.array() += (yi.transpose() * yi).array() * gram_base(kc.base(i), X).array();
  }
  return K;
}

Eigen::MatrixXd cross_adp(const ADPKernel& kc, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          const Eigen::MatrixXd& X2, const Eigen::MatrixXd& Y2) {
  if (X.cols() != Y.cols() || X2.cols() != Y2.cols())
    throw std::invalid_argument("cross_adp: column counts differ");
  if (Y.rows() != kc.p() || Y2.rows() != kc.p())
    throw std::invalid_argument("cross_adp: augmented inputs must have p rows");
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(X.cols(), X2.cols());
  for (Eigen::Index i = 0; i < kc.p(); ++i)
    K.array() += (Y.row(i).transpose() * Y2.row(i)).array() * gram_base(kc.base(i), X, X2).array();
  return K;
}

}  // namespace gpclf
