#include "gpclf/gp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gpclf {

TrainingSet TrainingSet::empty(Eigen::Index state_dim, Eigen::Index p, double noise_std) {
  TrainingSet t;
  t.X.resize(state_dim, 0);
  t.Y.resize(p, 0);
  t.z.resize(0);
  t.noise_std = noise_std;
  return t;
}

void TrainingSet::append(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double label) {
  if (x.size() != X.rows() || y.size() != Y.rows())
    throw std::invalid_argument("TrainingSet::append: dimension mismatch");
  const Eigen::Index N = size();
  X.conservativeResize(Eigen::NoChange, N + 1);
  Y.conservativeResize(Eigen::NoChange, N + 1);
  z.conservativeResize(N + 1);
  X.col(N) = x;
  Y.col(N) = y;
  z(N) = label;
}

void TrainingSet::append(const TrainingSet& other) {
  if (other.X.rows() != X.rows() || other.Y.rows() != Y.rows())
    throw std::invalid_argument("TrainingSet::append: dimension mismatch");
  const Eigen::Index N = size(), M = other.size();
  X.conservativeResize(Eigen::NoChange, N + M);
  Y.conservativeResize(Eigen::NoChange, N + M);
  z.conservativeResize(N + M);
  X.rightCols(M) = other.X;
  Y.rightCols(M) = other.Y;
  z.tail(M) = other.z;
}

TrainingSet TrainingSet::subset(const std::vector<Eigen::Index>& indices) const {
  TrainingSet s = empty(state_dim(), p(), noise_std);
  const auto M = static_cast<Eigen::Index>(indices.size());
  s.X.resize(state_dim(), M);
  s.Y.resize(p(), M);
  s.z.resize(M);
  for (Eigen::Index k = 0; k < M; ++k) {
    const Eigen::Index j = indices[static_cast<std::size_t>(k)];
    s.X.col(k) = X.col(j);
    s.Y.col(k) = Y.col(j);
    s.z(k) = z(j);
  }
  return s;
}

namespace {

void check_data(const ADPKernel& kernel, const TrainingSet& data) {
  if (data.X.cols() != data.Y.cols() || data.X.cols() != data.z.size())
    throw std::invalid_argument("training set: inconsistent number of points");
  if (data.X.rows() != kernel.state_dim() || data.Y.rows() != kernel.p())
    throw std::invalid_argument("training set: dimensions do not match the kernel");
  if (data.noise_std < 0.0) throw std::invalid_argument("training set: negative noise");
}

Eigen::MatrixXd regularized_gram(const ADPKernel& kernel, const TrainingSet& data, double* jitter) {
  Eigen::MatrixXd K = gram_adp(kernel, data.X, data.Y);
  const Eigen::Index N = data.size();
  const double j = N > 0 ? 1e-10 * K.trace() / static_cast<double>(N) : 0.0;
  K.diagonal().array() += data.noise_std * data.noise_std + j;
  if (jitter) *jitter = j;
  return K;
}

std::string smallest_pivot_message(const Eigen::MatrixXd& K) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
  std::ostringstream msg;
  msg << "GP fit: covariance not positive definite (smallest pivot "
      << ldlt.vectorD().minCoeff() << ")";
  return msg.str();
}

}  // namespace

GPModel::GPModel(ADPKernel kernel, TrainingSet data)
    : kernel_(std::move(kernel)), data_(std::move(data)) {
  check_data(kernel_, data_);
  const Eigen::Index N = data_.size();
  if (N == 0) {
    alpha_.resize(0);
    return;
  }
  if (!(data_.noise_std > 0.0))
    throw std::invalid_argument("GP fit: noise_std must be positive when data is present");
  const Eigen::MatrixXd K = regularized_gram(kernel_, data_, &jitter_);
  llt_.compute(K);
  if (llt_.info() != Eigen::Success) throw std::runtime_error(smallest_pivot_message(K));
  alpha_ = llt_.solve(data_.z);
}

Eigen::MatrixXd GPModel::half_solve(const Eigen::MatrixXd& rhs) const {
  if (size() == 0) return Eigen::MatrixXd(0, rhs.cols());
  return llt_.matrixL().solve(rhs);
}

double GPModel::log_det() const {
  if (size() == 0) return 0.0;
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Prediction posterior_generic(const GPModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const ADPKernel& kc = model.kernel();
  const double prior = eval_adp(kc, x, y, x, y);
  if (model.size() == 0) return {0.0, std::max(prior, 0.0)};
  const Eigen::MatrixXd ks = cross_adp(kc, model.data().X, model.data().Y, x, y);
  const double mean = ks.col(0).dot(model.weights());
  const Eigen::VectorXd v = model.half_solve(ks);
  return {mean, std::max(0.0, prior - v.squaredNorm())};
}

StructuredPosterior posterior_adp(const GPModel& model, const Eigen::VectorXd& x_star) {
  const ADPKernel& kc = model.kernel();
  if (x_star.size() != kc.state_dim())
    throw std::invalid_argument("posterior_adp: state dimension mismatch");
  StructuredPosterior post;
  const Eigen::Index p = kc.p();
  post.C = kc.prior_diagonal().asDiagonal();
  if (model.size() == 0) {
    post.b = Eigen::VectorXd::Zero(p);
    return post;
  }
  const TrainingSet& data = model.data();
  // K_{*Y}: row i is k_i(x_*, X) o Y.row(i)
  Eigen::MatrixXd KsY(p, data.size());
  for (Eigen::Index i = 0; i < p; ++i)
    KsY.row(i) = gram_base(kc.base(i), x_star, data.X).row(0).cwiseProduct(data.Y.row(i));
  post.b = KsY * model.weights();
  const Eigen::MatrixXd V = model.half_solve(KsY.transpose());
  post.C.noalias() -= V.transpose() * V;
  post.C = 0.5 * (post.C + post.C.transpose()).eval();
  return post;
}

ConeFactors socp_factors(const StructuredPosterior& post, double tol) {
  const Eigen::Index p = post.C.rows();
  if (p < 1 || post.C.cols() != p) throw std::invalid_argument("socp_factors: C must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.C);
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double bound = -tol * (1.0 + post.C.cwiseAbs().trace());
  if (lambda.minCoeff() < bound) {
    std::ostringstream msg;
    msg << "socp_factors: posterior covariance is indefinite (min eigenvalue " << lambda.minCoeff() << ")";
    throw std::domain_error(msg.str());
  }
  lambda = lambda.cwiseMax(0.0);
  const Eigen::MatrixXd L = lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  return {L.rightCols(p - 1), L.col(0)};
}

double log_marginal_likelihood(const ADPKernel& kernel, const TrainingSet& data) {
  return log_marginal_likelihood(kernel, data, nullptr);
}

double log_marginal_likelihood(const ADPKernel& kernel, const TrainingSet& data,
                               Eigen::VectorXd* gradient) {
  check_data(kernel, data);
  const Eigen::Index N = data.size();
  const Eigen::Index n = kernel.state_dim();
  const Eigen::Index p = kernel.p();
  if (gradient) *gradient = Eigen::VectorXd::Zero(p * (n + 1) + 1);
  if (N == 0) return 0.0;
  if (!(data.noise_std > 0.0))
    throw std::invalid_argument("log_marginal_likelihood: noise_std must be positive");

  std::vector<Eigen::MatrixXd> bases;
  bases.reserve(static_cast<std::size_t>(p));
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::RowVectorXd yi = data.Y.row(i);
    bases.push_back((yi.transpose() * yi).cwiseProduct(gram_base(kernel.base(i), data.X)));
    K += bases.back();
  }
  const double jitter = 1e-10 * K.trace() / static_cast<double>(N);
  const double noise_var = data.noise_std * data.noise_std;
  K.diagonal().array() += noise_var + jitter;

  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw std::runtime_error(smallest_pivot_message(K));
  const Eigen::VectorXd alpha = llt.solve(data.z);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double lml = -0.5 * data.z.dot(alpha) - 0.5 * log_det -
                     0.5 * static_cast<double>(N) * std::log(2.0 * std::numbers::pi);
  if (!gradient) return lml;

  // d lml / d theta = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta)
  Eigen::MatrixXd W = -llt.solve(Eigen::MatrixXd::Identity(N, N));
  W.noalias() += alpha * alpha.transpose();
  Eigen::VectorXd& g = *gradient;
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::MatrixXd WS = W.cwiseProduct(bases[static_cast<std::size_t>(i)]);
    const Eigen::Index off = i * (n + 1);
    // the jitter scales with trace(K_c), which depends on every signal variance
    g(off) = 0.5 * WS.sum() + 0.5 * W.trace() * 1e-10 * bases[static_cast<std::size_t>(i)].trace() / N;
    const Eigen::VectorXd& ell = kernel.base(i).lengthscales();
    for (Eigen::Index d = 0; d < n; ++d) {
      const Eigen::ArrayXd xd = data.X.row(d).transpose() / ell(d);
      double acc = 0.0;
      for (Eigen::Index c = 0; c < N; ++c)
        acc += (WS.col(c).array() * (xd - xd(c)).square()).sum();
      g(off + 1 + d) = 0.5 * acc;
    }
  }
  g(p * (n + 1)) = W.trace() * noise_var;
  return lml;
}

namespace {

struct ParamBounds {
  Eigen::VectorXd lo, hi;
};

Eigen::VectorXd pack(const ADPKernel& kernel, double noise_std) {
  const Eigen::Index n = kernel.state_dim(), p = kernel.p();
  Eigen::VectorXd theta(p * (n + 1) + 1);
  for (Eigen::Index i = 0; i < p; ++i) {
    theta(i * (n + 1)) = std::log(kernel.base(i).signal_variance());
    theta.segment(i * (n + 1) + 1, n) = kernel.base(i).lengthscales().array().log().matrix();
  }
  theta(p * (n + 1)) = std::log(noise_std);
  return theta;
}

ADPKernel unpack(const Eigen::VectorXd& theta, Eigen::Index n, Eigen::Index p, double* noise_std) {
  std::vector<SEKernel> bases;
  for (Eigen::Index i = 0; i < p; ++i)
    bases.emplace_back(std::exp(theta(i * (n + 1))),
                       theta.segment(i * (n + 1) + 1, n).array().exp().matrix());
  *noise_std = std::exp(theta(p * (n + 1)));
  return ADPKernel(std::move(bases));
}

ParamBounds bounds(const TrainOptions& o, Eigen::Index n, Eigen::Index p, double fixed_noise) {
  const Eigen::Index dim = p * (n + 1) + 1;
  ParamBounds b{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
  for (Eigen::Index i = 0; i < p; ++i) {
    b.lo(i * (n + 1)) = std::log(o.min_signal_variance);
    b.hi(i * (n + 1)) = std::log(o.max_signal_variance);
    b.lo.segment(i * (n + 1) + 1, n).setConstant(std::log(o.min_lengthscale));
    b.hi.segment(i * (n + 1) + 1, n).setConstant(std::log(o.max_lengthscale));
  }
  if (o.train_noise) {
    b.lo(dim - 1) = std::log(o.min_noise);
    b.hi(dim - 1) = std::log(o.max_noise);
  } else {
    b.lo(dim - 1) = b.hi(dim - 1) = std::log(fixed_noise);
  }
  return b;
}

// Negative LML and gradient; +inf when the covariance cannot be factorized.
double objective(const Eigen::VectorXd& theta, const TrainingSet& data, Eigen::Index n, Eigen::Index p,
                 Eigen::VectorXd* grad) {
  TrainingSet local = data;
  try {
    const ADPKernel k = unpack(theta, n, p, &local.noise_std);
    const double lml = log_marginal_likelihood(k, local, grad);
    if (!std::isfinite(lml)) return std::numeric_limits<double>::infinity();
    *grad = -*grad;
    return -lml;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

Eigen::VectorXd project(Eigen::VectorXd theta, const ParamBounds& b) {
  return theta.cwiseMax(b.lo).cwiseMin(b.hi);
}

// Projected L-BFGS with Armijo backtracking on the box of log-parameters.
Eigen::VectorXd minimize(Eigen::VectorXd theta, const TrainingSet& data, Eigen::Index n, Eigen::Index p,
                         const ParamBounds& b, int max_iters, double* fval) {
  constexpr int history = 6;
  theta = project(theta, b);
  Eigen::VectorXd grad;
  double f = objective(theta, data, n, p, &grad);
  if (!std::isfinite(f)) {
    *fval = f;
    return theta;
  }
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;
  for (int it = 0; it < max_iters; ++it) {
    // free variables: not pinned at a bound by the gradient
    Eigen::VectorXd free_mask = Eigen::VectorXd::Ones(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k)
      if ((theta(k) <= b.lo(k) && grad(k) > 0) || (theta(k) >= b.hi(k) && grad(k) < 0) || b.lo(k) == b.hi(k))
        free_mask(k) = 0.0;
    const Eigen::VectorXd g = grad.cwiseProduct(free_mask);
    if (g.lpNorm<Eigen::Infinity>() < 1e-7) break;

    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> a(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      const auto& [s, y] = mem[k];
      a[k] = s.dot(q) / y.dot(s);
      q -= a[k] * y;
    }
    if (!mem.empty()) q *= mem.back().first.dot(mem.back().second) / mem.back().second.squaredNorm();
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const auto& [s, y] = mem[k];
      const double beta = y.dot(q) / y.dot(s);
      q += (a[k] - beta) * s;
    }
    Eigen::VectorXd dir = -q.cwiseProduct(free_mask);
    if (dir.dot(g) >= 0.0) {
      dir = -g;
      mem.clear();
    }
    // cap the step to avoid wild jumps in log space
    const double dmax = dir.lpNorm<Eigen::Infinity>();
    double step = dmax > 2.0 ? 2.0 / dmax : 1.0;
    if (mem.empty()) step = std::min(step, 0.5 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12));

    Eigen::VectorXd next, next_grad;
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      next = project(theta + step * dir, b);
      fn = objective(next, data, n, p, &next_grad);
      if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(next - theta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::VectorXd s = next - theta, y = next_grad - grad;
    if (s.dot(y) > 1e-12) {
      mem.emplace_back(s, y);
      if (mem.size() > history) mem.pop_front();
    }
    const double df = f - fn;
    theta = next;
    grad = next_grad;
    f = fn;
    if (df < 1e-10 * (1.0 + std::abs(f))) break;
  }
  *fval = f;
  return theta;
}

}  // namespace

TrainResult train_hyperparams(const ADPKernel& init, const TrainingSet& data, const TrainOptions& options) {
  check_data(init, data);
  if (data.size() < 2) throw std::invalid_argument("train_hyperparams: need at least two points");
  if (options.restarts < 1) throw std::invalid_argument("train_hyperparams: restarts must be >= 1");
  const Eigen::Index n = init.state_dim(), p = init.p();

  TrainingSet fit_data = data;
  if (options.max_points > 0 && data.size() > options.max_points) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < options.max_points; ++k)
      idx.push_back(k * data.size() / options.max_points);
    fit_data = data.subset(idx);
  }

  const double init_noise = std::max(data.noise_std, options.train_noise ? options.min_noise : 0.0);
  const ParamBounds b = bounds(options, n, p, init_noise);
  const Eigen::VectorXd theta0 = project(pack(init, init_noise), b);
  Eigen::VectorXd unused;
  const double f0 = objective(theta0, fit_data, n, p, &unused);

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(-options.restart_spread, options.restart_spread);
  double best_f = f0;
  Eigen::VectorXd best_theta = theta0;
  int best_restart = -1;
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd start = theta0;
    if (r > 0)
      for (Eigen::Index k = 0; k < start.size(); ++k) start(k) += jitter(rng);
    double f = 0.0;
    const Eigen::VectorXd theta = minimize(start, fit_data, n, p, b, options.max_iters, &f);
    if (std::isfinite(f) && f < best_f - 1e-12 * (1.0 + std::abs(best_f))) {
      best_f = f;
      best_theta = theta;
      best_restart = r;
    }
  }
  double noise = 0.0;
  ADPKernel kernel = unpack(best_theta, n, p, &noise);
  if (best_restart < 0) noise = init_noise;
  return {std::move(kernel), noise, -best_f, best_restart >= 0, best_restart};
}

void UCBConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("UCBConfig: delta must be in (0, 1)");
  if (!(rkhs_bound > 0.0)) throw std::invalid_argument("UCBConfig: rkhs_bound must be positive");
  if (gamma < 0.0) throw std::invalid_argument("UCBConfig: gamma must be non-negative");
  if (beta_override && !(*beta_override >= 0.0))
    throw std::invalid_argument("UCBConfig: beta override must be non-negative");
}

double beta(const UCBConfig& cfg, Eigen::Index n_data, std::optional<double> gamma) {
  cfg.validate();
  if (cfg.beta_override) return *cfg.beta_override;
  if (n_data < 0) throw std::invalid_argument("beta: negative data count");
  double g = cfg.gamma;
  if (cfg.gamma_mode == GammaMode::greedy_approx) {
    if (!gamma) throw std::invalid_argument("beta: greedy mode needs an information-gain value");
    g = *gamma;
  } else if (gamma) {
    g = *gamma;
  }
  const double l = std::log(static_cast<double>(n_data + 1) / cfg.delta);
  return std::sqrt(2.0 * cfg.rkhs_bound * cfg.rkhs_bound + 300.0 * g * l * l * l);
}

double greedy_information_gain(const ADPKernel& kernel, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y, double noise_std, Eigen::Index budget) {
  if (!(noise_std > 0.0)) throw std::invalid_argument("greedy_information_gain: noise must be positive");
  TrainingSet chosen = TrainingSet::empty(kernel.state_dim(), kernel.p(), noise_std);
  double gain = 0.0;
  const double inv_noise = 1.0 / (noise_std * noise_std);
  for (Eigen::Index t = 0; t < budget && X.cols() > 0; ++t) {
    const GPModel model(kernel, chosen);
    Eigen::Index best = 0;
    double best_var = -1.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double v = posterior_generic(model, X.col(c), Y.col(c)).variance;
      if (v > best_var) {
        best_var = v;
        best = c;
      }
    }
    gain += 0.5 * std::log1p(inv_noise * best_var);
    chosen.append(X.col(best), Y.col(best), 0.0);
  }
  return gain;
}

}  // namespace gpclf
