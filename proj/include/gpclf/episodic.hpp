#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gpclf/clf.hpp"
#include "gpclf/controllers.hpp"
#include "gpclf/gp.hpp"

namespace gpclf {

struct EpisodeConfig {
  double c0 = 0.1;
  /// Expansion increment per episode; the last entry repeats.
  std::vector<double> delta_c{0.1};
  int exploration_points = 5;
  int rollout_steps = 10;
  /// Annulus candidates scored per episode; 0 means 10 * exploration_points.
  int candidate_pool_size = 0;
  int total_episodes = 7;
  std::uint64_t seed = 0;

  int initial_rollouts = 8;
  int initial_rollout_steps = 15;
  double dt = 0.01;
  /// Std of the zero-mean uniform noise added to every label.
  double measurement_noise = 0.0;
  /// Initial sigma_n of the model.
  double noise_std = 0.01;
  /// Condition checked is  inf_u ... <= -margin.
  double certificate_margin = 1e-6;

  TrainOptions initial_training{};
  int retrain_restarts = 1;
  /// Grid points per state dimension for the probe-variance statistic.
  int probe_per_dim = 9;

  double increment(int episode) const;
  int pool_size() const { return candidate_pool_size > 0 ? candidate_pool_size : 10 * exploration_points; }
  void validate() const;
};

struct EpisodicProblem {
  ControlAffineSystem plant;
  ControlAffineSystem nominal;
  QuadraticCLF clf;
  /// lambda, slack penalty, U, beta and solver settings for every controller and certificate.
  ControllerConfig controller;
  /// Starting hyperparameters (p = m + 1).
  ADPKernel prior;
};

struct RoAEstimate {
  std::vector<double> levels;
  std::vector<bool> certified;
  double delta = 0.05;

  double final_level() const { return levels.back(); }
};

struct EpisodeRecord {
  int episode = 0;
  double level = 0.0;
  Eigen::Index data_count = 0;
  Eigen::Index accepted = 0;
  Eigen::Index rejected = 0;
  int certificates_checked = 0;
  int certificates_failed = 0;
  double probe_mean_sigma = 0.0;
  double probe_max_sigma = 0.0;
  bool stalled = false;
  /// rank of the augmented inputs accepted this episode equals p
  bool persistent = false;
  double wall_seconds = 0.0;
};

struct AlgorithmState {
  TrainingSet data;
  ADPKernel kernel;
  double noise_std = 0.0;
  std::shared_ptr<const GPModel> model;
  RoAEstimate roa;
  std::vector<EpisodeRecord> log;

  int episodes_done() const { return static_cast<int>(log.size()) - 1; }
  double level() const { return roa.final_level(); }
};

/// Fixed (x, u) pairs inside a sublevel set used to track posterior spread.
struct ProbeGrid {
  Eigen::MatrixXd X;
  Eigen::MatrixXd U;
};

ProbeGrid make_probe_grid(const QuadraticCLF& clf, double level, const InputBox& U, int per_dim);

struct ProbeStats {
  double mean_sigma = 0.0;
  double max_sigma = 0.0;
};

ProbeStats probe_sigma(const GPModel& model, const ProbeGrid& grid);

/// Rollouts of the nominal CLF-QP from states drawn uniformly in the c0 level
/// set. The first input of each rollout is drawn uniformly from U so that the
/// input-gain part of the mismatch is excited. Measurements outside the
/// c0 level set are dropped.
TrainingSet collect_initial(const EpisodicProblem& problem, const EpisodeConfig& cfg);

struct ExplorationPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double sigma = 0.0;
};

/// The `count` candidates from (annulus x U) with the largest posterior std.
/// Candidates are sorted by decreasing sigma, ties by draw order.
std::vector<ExplorationPoint> select_exploration_points(const GPModel& model, const QuadraticCLF& clf, double c_prev,
                                                        double delta_c, const InputBox& U, int count, int pool,
                                                        std::mt19937_64& rng);

/// True when  inf_{u in U} Vdot_nominal(x, u) + mu(x, u) + beta sigma(x, u) <= -margin
/// is feasible. An inconclusive solve counts as infeasible.
bool check_certificate(const GPModel& model, const ControlAffineSystem& nominal, const QuadraticCLF& clf, double beta,
                       const InputBox& U, const Eigen::VectorXd& x, double margin = 1e-6,
                       const SolverSettings& settings = {});

/// Level chosen from certificate outcomes at sampled values of V: the full
/// step when nothing in (c_prev, c_prev + delta_c] failed, otherwise the
/// largest passing value below the lowest failure, rounded down to a 64-step
/// grid on [c_prev, c_prev + delta_c].
double next_level(double c_prev, double delta_c, const std::vector<double>& values, const std::vector<bool>& passed);

/// Collects the initial data set and fits the first model.
AlgorithmState initialize(const EpisodicProblem& problem, const EpisodeConfig& cfg);

/// One exploration episode: select points, roll out the current GP-CLF-SOCP,
/// certify sampled states, keep data inside the new level set and refit.
AlgorithmState run_episode(const AlgorithmState& state, const EpisodicProblem& problem, const EpisodeConfig& cfg);

using EpisodeCallback = std::function<void(const AlgorithmState&)>;

/// initialize() followed by cfg.total_episodes calls to run_episode(). The
/// callback, if set, sees the state after initialization and every episode.
AlgorithmState run_algorithm(const EpisodicProblem& problem, const EpisodeConfig& cfg,
                             const EpisodeCallback& on_episode = {});

/// Fraction of `starts` plant rollouts from the boundary of the level set
/// that end the horizon with V < target.
double validate_region(const ControlAffineSystem& plant, const Controller& controller, const QuadraticCLF& clf,
                       double level, double target, int starts, double horizon, double dt, std::uint64_t seed);

}  // namespace gpclf
