#include "gpclf/episodic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gpclf {

double EpisodeConfig::increment(int episode) const {
  if (delta_c.empty()) throw std::invalid_argument("EpisodeConfig: delta_c is empty");
  const std::size_t i = static_cast<std::size_t>(std::max(episode, 1) - 1);
  return delta_c[std::min(i, delta_c.size() - 1)];
}

void EpisodeConfig::validate() const {
  if (!(c0 > 0.0)) throw std::invalid_argument("EpisodeConfig: c0 must be positive");
  if (delta_c.empty()) throw std::invalid_argument("EpisodeConfig: delta_c is empty");
  for (double d : delta_c)
    if (!(d > 0.0)) throw std::invalid_argument("EpisodeConfig: every delta_c must be positive");
  if (exploration_points < 1) throw std::invalid_argument("EpisodeConfig: exploration_points must be >= 1");
  if (rollout_steps < 1 || initial_rollout_steps < 1)
    throw std::invalid_argument("EpisodeConfig: rollout steps must be >= 1");
  if (initial_rollouts < 1) throw std::invalid_argument("EpisodeConfig: initial_rollouts must be >= 1");
  if (pool_size() < exploration_points)
    throw std::invalid_argument("EpisodeConfig: candidate pool smaller than exploration_points");
  if (total_episodes < 0) throw std::invalid_argument("EpisodeConfig: total_episodes must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("EpisodeConfig: dt must be positive");
  if (measurement_noise < 0.0) throw std::invalid_argument("EpisodeConfig: measurement_noise must be >= 0");
  if (!(noise_std > 0.0)) throw std::invalid_argument("EpisodeConfig: noise_std must be positive");
  if (certificate_margin < 0.0) throw std::invalid_argument("EpisodeConfig: certificate_margin must be >= 0");
  if (retrain_restarts < 0) throw std::invalid_argument("EpisodeConfig: retrain_restarts must be >= 0");
  if (probe_per_dim < 2) throw std::invalid_argument("EpisodeConfig: probe_per_dim must be >= 2");
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd augmented(const Eigen::VectorXd& u) {
  Eigen::VectorXd y(u.size() + 1);
  y << 1.0, u;
  return y;
}

Eigen::VectorXd uniform_input(const InputBox& U, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd u(U.dim());
  for (Eigen::Index i = 0; i < U.dim(); ++i) u(i) = U.lower(i) + (U.upper(i) - U.lower(i)) * unit(rng);
  return u;
}

double final_target(const EpisodeConfig& cfg) {
  double c = cfg.c0;
  for (int i = 1; i <= cfg.total_episodes; ++i) c += cfg.increment(i);
  return c;
}

bool full_rank(const Eigen::MatrixXd& Y) {
  if (Y.cols() < Y.rows()) return false;
  const Eigen::MatrixXd gram = Y * Y.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-9);
  return lu.rank() == Y.rows();
}

std::shared_ptr<const GPModel> fit(const ADPKernel& kernel, const TrainingSet& data) {
  return std::make_shared<const GPModel>(kernel, data);
}

}  // namespace

ProbeGrid make_probe_grid(const QuadraticCLF& clf, double level, const InputBox& U, int per_dim) {
  const SublevelSet omega(clf, level);
  const Eigen::VectorXd half = omega.box_half_widths();
  const Eigen::Index n = clf.dim(), m = U.dim();

  std::vector<Eigen::VectorXd> states;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = half(i) * (-1.0 + 2.0 * idx[i] / (per_dim - 1));
    if (x.squaredNorm() > 0.0 && omega.contains(x)) states.push_back(x);
    Eigen::Index k = 0;
    while (k < n && ++idx[k] == per_dim) idx[k++] = 0;
    if (k == n) break;
  }

  // zero input and every vertex of U
  std::vector<Eigen::VectorXd> inputs{Eigen::VectorXd::Zero(m)};
  for (Eigen::Index mask = 0; mask < (Eigen::Index{1} << m); ++mask) {
    Eigen::VectorXd u(m);
    for (Eigen::Index i = 0; i < m; ++i) u(i) = (mask >> i) & 1 ? U.upper(i) : U.lower(i);
    inputs.push_back(u);
  }

  ProbeGrid grid{Eigen::MatrixXd(n, 0), Eigen::MatrixXd(m, 0)};
  grid.X.resize(n, static_cast<Eigen::Index>(states.size() * inputs.size()));
  grid.U.resize(m, grid.X.cols());
  Eigen::Index col = 0;
  for (const auto& x : states)
    for (const auto& u : inputs) {
      grid.X.col(col) = x;
      grid.U.col(col++) = u;
    }
  return grid;
}

ProbeStats probe_sigma(const GPModel& model, const ProbeGrid& grid) {
  ProbeStats s;
  if (grid.X.cols() == 0) return s;
  double sum = 0.0;
  Eigen::VectorXd last_x;
  StructuredPosterior post;
  for (Eigen::Index k = 0; k < grid.X.cols(); ++k) {
    if (last_x.size() == 0 || last_x != grid.X.col(k)) {
      last_x = grid.X.col(k);
      post = posterior_adp(model, last_x);
    }
    const double sigma = post.stddev(augmented(grid.U.col(k)));
    sum += sigma;
    s.max_sigma = std::max(s.max_sigma, sigma);
  }
  s.mean_sigma = sum / static_cast<double>(grid.X.cols());
  return s;
}

TrainingSet collect_initial(const EpisodicProblem& problem, const EpisodeConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = problem.controller.U.dim();
  std::mt19937_64 rng = stream(cfg.seed, 0xC0FFEE);
  const Eigen::MatrixXd starts = SublevelSet(problem.clf, cfg.c0).sample_interior(rng, cfg.initial_rollouts);

  const Controller ctrl = [&](const Eigen::VectorXd& x) {
    return clf_qp(problem.nominal, problem.clf, problem.controller, x);
  };
  const auto value = [&](const Eigen::VectorXd& x) { return problem.clf.value(x); };

  TrainingSet data = TrainingSet::empty(problem.clf.dim(), m + 1, cfg.noise_std);
  for (Eigen::Index r = 0; r < starts.cols(); ++r) {
    RolloutOptions opts;
    opts.dt = cfg.dt;
    opts.horizon = cfg.initial_rollout_steps * cfg.dt;
    opts.first_input = uniform_input(problem.controller.U, rng);
    const Trajectory traj = rollout(problem.plant, ctrl, value, starts.col(r), opts);
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
      const Measurement meas = make_measurement(problem.clf, problem.nominal, traj.records[k].x,
                                                traj.records[k + 1].x, traj.records[k].u, cfg.dt,
                                                cfg.measurement_noise, &rng);
      // the random first input can push a rollout out of the level set
      if (problem.clf.value(meas.x) <= cfg.c0) data.append(meas.x, augmented(meas.u), meas.z);
    }
  }
  return data;
}

std::vector<ExplorationPoint> select_exploration_points(const GPModel& model, const QuadraticCLF& clf, double c_prev,
                                                        double delta_c, const InputBox& U, int count, int pool,
                                                        std::mt19937_64& rng) {
  if (count < 1 || pool < count) throw std::invalid_argument("select_exploration_points: need pool >= count >= 1");
  const SublevelSet outer(clf, c_prev + delta_c);
  const Eigen::MatrixXd X = outer.sample_annulus(rng, c_prev, pool);

  std::vector<ExplorationPoint> cand;
  cand.reserve(static_cast<std::size_t>(pool));
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    ExplorationPoint pt{X.col(k), uniform_input(U, rng), 0.0};
    pt.sigma = posterior_adp(model, pt.x).stddev(augmented(pt.u));
    cand.push_back(std::move(pt));
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const ExplorationPoint& a, const ExplorationPoint& b) { return a.sigma > b.sigma; });
  cand.resize(static_cast<std::size_t>(count));
  return cand;
}

bool check_certificate(const GPModel& model, const ControlAffineSystem& nominal, const QuadraticCLF& clf, double beta,
                       const InputBox& U, const Eigen::VectorXd& x, double margin, const SolverSettings& settings) {
  const Eigen::Index m = U.dim();
  if (model.kernel().p() != m + 1) throw std::invalid_argument("check_certificate: model must have p = m + 1");
  const LieDerivatives lie = lie_derivatives(clf, nominal, x);
  const StructuredPosterior post = posterior_adp(model, x);
  const ConeFactors cone = socp_factors(post);

  // beta ||M u + n|| <= -margin - LfV - b0 - (LgV + b1^T) u
  const Eigen::RowVectorXd gain = lie.LgV + post.b.tail(m).transpose();
  const double offset = margin + lie.LfV + post.b(0);
  ConicProgram prog(m);
  const double scale = beta * std::max(cone.M.cwiseAbs().maxCoeff(), cone.n.cwiseAbs().maxCoeff());
  if (scale > 0.0)
    prog.add_cone(beta * cone.M, beta * cone.n, -gain.transpose(), -offset);
  else
    prog.add_linear(gain, -offset);
  for (Eigen::Index i = 0; i < m; ++i) prog.add_bounds(i, U.lower(i), U.upper(i));
  return check_feasibility(prog, settings).status == Feasibility::feasible;
}

double next_level(double c_prev, double delta_c, const std::vector<double>& values, const std::vector<bool>& passed) {
  if (values.size() != passed.size()) throw std::invalid_argument("next_level: size mismatch");
  const double top = c_prev + delta_c;
  double lowest_fail = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!passed[k] && values[k] > c_prev && values[k] <= top) lowest_fail = std::min(lowest_fail, values[k]);
  if (!std::isfinite(lowest_fail)) return top;

  double best = c_prev;
  for (std::size_t k = 0; k < values.size(); ++k)
    if (passed[k] && values[k] > c_prev && values[k] < lowest_fail) best = std::max(best, values[k]);
  const double steps = std::floor((best - c_prev) / delta_c * 64.0);
  return c_prev + std::clamp(steps, 0.0, 64.0) / 64.0 * delta_c;
}

AlgorithmState initialize(const EpisodicProblem& problem, const EpisodeConfig& cfg) {
  cfg.validate();
  problem.controller.validate();
  const auto t0 = std::chrono::steady_clock::now();
  AlgorithmState state{collect_initial(problem, cfg), problem.prior, cfg.noise_std, nullptr, {}, {}};

  TrainOptions opts = cfg.initial_training;
  opts.seed = cfg.seed;
  const TrainResult tr = train_hyperparams(problem.prior, state.data, opts);
  state.kernel = tr.kernel;
  state.noise_std = tr.noise_std;
  state.data.noise_std = tr.noise_std;
  state.model = fit(state.kernel, state.data);

  state.roa.levels = {cfg.c0};
  state.roa.certified = {true};
  const ProbeStats ps =
      probe_sigma(*state.model, make_probe_grid(problem.clf, final_target(cfg), problem.controller.U, cfg.probe_per_dim));
  EpisodeRecord rec;
  rec.level = cfg.c0;
  rec.data_count = rec.accepted = state.data.size();
  rec.probe_mean_sigma = ps.mean_sigma;
  rec.probe_max_sigma = ps.max_sigma;
  rec.persistent = full_rank(state.data.Y);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  state.log.push_back(rec);
  return state;
}

AlgorithmState run_episode(const AlgorithmState& state, const EpisodicProblem& problem, const EpisodeConfig& cfg) {
  if (!state.model || state.log.empty()) throw std::invalid_argument("run_episode: state is not initialized");
  const auto t0 = std::chrono::steady_clock::now();
  const int episode = state.episodes_done() + 1;
  std::mt19937_64 rng = stream(cfg.seed, static_cast<std::uint64_t>(episode));
  const double c_prev = state.level();
  const double dc = cfg.increment(episode);
  const ControllerConfig& ccfg = problem.controller;
  const GPModel& model = *state.model;

  const std::vector<ExplorationPoint> seeds = select_exploration_points(
      model, problem.clf, c_prev, dc, ccfg.U, cfg.exploration_points, cfg.pool_size(), rng);

  const Controller ctrl = [&](const Eigen::VectorXd& x) {
    return gp_clf_socp(problem.nominal, problem.clf, model, ccfg, x);
  };
  const auto value = [&](const Eigen::VectorXd& x) { return problem.clf.value(x); };

  EpisodeRecord rec;
  rec.episode = episode;
  std::vector<double> values;
  std::vector<bool> passed;
  std::vector<Measurement> measurements;
  for (const ExplorationPoint& seed : seeds) {
    RolloutOptions opts;
    opts.dt = cfg.dt;
    opts.horizon = cfg.rollout_steps * cfg.dt;
    opts.first_input = seed.u;
    const Trajectory traj = rollout(problem.plant, ctrl, value, seed.x, opts);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const TrajectoryRecord& r = traj.records[k];
      if (r.V > c_prev && r.V <= c_prev + dc) {
        const bool ok = check_certificate(model, problem.nominal, problem.clf, ccfg.beta, ccfg.U, r.x,
                                          cfg.certificate_margin, ccfg.solver);
        values.push_back(r.V);
        passed.push_back(ok);
        ++rec.certificates_checked;
        rec.certificates_failed += ok ? 0 : 1;
      }
      if (k + 1 < traj.size())
        measurements.push_back(make_measurement(problem.clf, problem.nominal, r.x, traj.records[k + 1].x, r.u,
                                                cfg.dt, cfg.measurement_noise, &rng));
    }
  }

  const double level = next_level(c_prev, dc, values, passed);
  AlgorithmState next = state;
  TrainingSet accepted = TrainingSet::empty(problem.clf.dim(), ccfg.U.dim() + 1, state.noise_std);
  for (const Measurement& meas : measurements) {
    if (problem.clf.value(meas.x) <= level)
      accepted.append(meas.x, augmented(meas.u), meas.z);
    else
      ++rec.rejected;
  }
  next.data.append(accepted);

  if (cfg.retrain_restarts > 0 && accepted.size() > 0) {
    TrainOptions opts = cfg.initial_training;
    opts.restarts = cfg.retrain_restarts;
    opts.seed = cfg.seed + static_cast<std::uint64_t>(episode);
    next.data.noise_std = state.noise_std;
    const TrainResult tr = train_hyperparams(state.kernel, next.data, opts);
    next.kernel = tr.kernel;
    next.noise_std = tr.noise_std;
  }
  next.data.noise_std = next.noise_std;
  next.model = fit(next.kernel, next.data);

  next.roa.levels.push_back(level);
  next.roa.certified.push_back(level > c_prev);
  const ProbeStats ps =
      probe_sigma(*next.model, make_probe_grid(problem.clf, final_target(cfg), ccfg.U, cfg.probe_per_dim));
  rec.level = level;
  rec.data_count = next.data.size();
  rec.accepted = accepted.size();
  rec.probe_mean_sigma = ps.mean_sigma;
  rec.probe_max_sigma = ps.max_sigma;
  rec.stalled = !(level > c_prev);
  rec.persistent = full_rank(accepted.Y);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  next.log.push_back(rec);
  return next;
}

AlgorithmState run_algorithm(const EpisodicProblem& problem, const EpisodeConfig& cfg,
                             const EpisodeCallback& on_episode) {
  AlgorithmState state = initialize(problem, cfg);
  if (on_episode) on_episode(state);
  for (int i = 0; i < cfg.total_episodes; ++i) {
    state = run_episode(state, problem, cfg);
    if (on_episode) on_episode(state);
  }
  return state;
}

double validate_region(const ControlAffineSystem& plant, const Controller& controller, const QuadraticCLF& clf,
                       double level, double target, int starts, double horizon, double dt, std::uint64_t seed) {
  if (starts < 1) throw std::invalid_argument("validate_region: starts must be >= 1");
  std::mt19937_64 rng = stream(seed, 0xB0DE);
  const Eigen::MatrixXd X = SublevelSet(clf, level).sample_boundary(rng, starts);
  const auto value = [&](const Eigen::VectorXd& x) { return clf.value(x); };
  RolloutOptions opts;
  opts.horizon = horizon;
  opts.dt = dt;
  int ok = 0;
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const Trajectory traj = rollout(plant, controller, value, X.col(k), opts);
    if (traj.records.back().V < target) ++ok;
  }
  return static_cast<double>(ok) / starts;
}

}  // namespace gpclf
