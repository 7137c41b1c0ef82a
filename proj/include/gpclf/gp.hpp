#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "gpclf/kernels.hpp"

namespace gpclf {

/// Regression data: state inputs X (n x N), augmented inputs Y (p x N) and labels z.
/// In the control application every column of Y is [1, u^T]^T.
struct TrainingSet {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  Eigen::VectorXd z;
  double noise_std = 0.0;

  static TrainingSet empty(Eigen::Index state_dim, Eigen::Index p, double noise_std);

  Eigen::Index size() const { return z.size(); }
  Eigen::Index state_dim() const { return X.rows(); }
  Eigen::Index p() const { return Y.rows(); }

  void append(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double label);
  void append(const TrainingSet& other);
  /// Columns `indices` of this set, in the given order.
  TrainingSet subset(const std::vector<Eigen::Index>& indices) const;
};

/// Zero-mean GP posterior under an ADP compound kernel, conditioned on a
/// TrainingSet. Immutable once constructed.
class GPModel {
public:
  /// Factorizes K_c + sigma_n^2 I (plus a trace-relative jitter).
  /// Throws std::runtime_error naming the smallest pivot when factorization fails.
  GPModel(ADPKernel kernel, TrainingSet data);

  const ADPKernel& kernel() const { return kernel_; }
  const TrainingSet& data() const { return data_; }
  Eigen::Index size() const { return data_.size(); }
  double jitter() const { return jitter_; }

  /// (K_c + sigma_n^2 I)^{-1} z
  const Eigen::VectorXd& weights() const { return alpha_; }
  /// Solves L v = rhs with L the lower Cholesky factor.
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& rhs) const;
  double log_det() const;

private:
  ADPKernel kernel_;
  TrainingSet data_;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  double stddev() const { return std::sqrt(variance); }
};

/// Textbook posterior for one (x, y) query, treating k_c as an opaque kernel.
Prediction posterior_generic(const GPModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Posterior at a state x_* in closed form over the augmented input:
/// mean(y) = b^T y, variance(y) = y^T C y.
struct StructuredPosterior {
  Eigen::VectorXd b;
  Eigen::MatrixXd C;

  double mean(const Eigen::VectorXd& y) const { return b.dot(y); }
  /// Clamped at zero.
  double variance(const Eigen::VectorXd& y) const { return std::max(0.0, y.dot(C * y)); }
  double stddev(const Eigen::VectorXd& y) const { return std::sqrt(variance(y)); }
};

StructuredPosterior posterior_adp(const GPModel& model, const Eigen::VectorXd& x_star);

/// sigma(x, u) = ||M u + n|| with y = [1, u^T]^T and L^T L = C.
struct ConeFactors {
  Eigen::MatrixXd M;  ///< p x (p-1)
  Eigen::VectorXd n;  ///< p
};

/// Eigenvalue-clamped square root of C. Throws std::domain_error if C has an
/// eigenvalue below -tol * (1 + trace|C|).
ConeFactors socp_factors(const StructuredPosterior& post, double tol = 1e-8);

double log_marginal_likelihood(const ADPKernel& kernel, const TrainingSet& data);

/// Log marginal likelihood and its gradient with respect to the log-parameters
/// [log sf2_1, log l_1 (n entries), ..., log sf2_p, log l_p, log sigma_n].
double log_marginal_likelihood(const ADPKernel& kernel, const TrainingSet& data,
                               Eigen::VectorXd* gradient);

struct TrainOptions {
  int restarts = 8;
  int max_iters = 100;
  std::uint64_t seed = 0;
  bool train_noise = true;
  double min_noise = 1e-4;
  double max_noise = 10.0;
  double min_lengthscale = 1e-2;
  double max_lengthscale = 1e3;
  double min_signal_variance = 1e-8;
  double max_signal_variance = 1e6;
  /// Random restarts perturb every log-parameter uniformly by +/- this amount.
  double restart_spread = 1.5;
  /// When positive, hyperparameters are fitted on an evenly spaced subset of
  /// at most this many points.
  Eigen::Index max_points = 0;
};

struct TrainResult {
  ADPKernel kernel;
  double noise_std;
  double log_likelihood;
  /// False when no restart improved on the initialization (returned unchanged).
  bool improved;
  int best_restart;
};

TrainResult train_hyperparams(const ADPKernel& init, const TrainingSet& data,
                              const TrainOptions& options = {});

enum class GammaMode { constant, greedy_approx };

struct UCBConfig {
  double delta = 0.05;
  double rkhs_bound = 1.0;
  GammaMode gamma_mode = GammaMode::constant;
  /// gamma_{N+1} used by the formula in constant mode.
  double gamma = 0.0;
  std::optional<double> beta_override = 2.0;

  void validate() const;
};

/// Confidence scale (2 B^2 + 300 gamma ln^3((N+1)/delta))^{1/2}, or the override.
/// In greedy mode `gamma` must be supplied (see greedy_information_gain).
double beta(const UCBConfig& cfg, Eigen::Index n_data, std::optional<double> gamma = std::nullopt);

/// Greedy lower approximation of the maximum information gain after `budget`
/// observations drawn from the candidate columns (X, Y).
double greedy_information_gain(const ADPKernel& kernel, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y, double noise_std, Eigen::Index budget);

}  // namespace gpclf
