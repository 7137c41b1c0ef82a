#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpclf/controllers.hpp"
#include "gpclf/episodic.hpp"

namespace gpclf {

enum class Benchmark { pendulum, bicycle };

std::string to_string(Benchmark b);

/// Everything a run depends on. Read from an INI-style file with the sections
/// [experiment], [plant], [nominal], [clf], [controller], [kernel],
/// [episodic] and [sim]; see README.md for the keys.
struct ExperimentConfig {
  Benchmark benchmark = Benchmark::pendulum;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  PendulumParams pendulum_plant;
  PendulumParams pendulum_nominal;
  BicycleParams bicycle_plant;
  BicycleParams bicycle_nominal;
  double v_ref = 5.0;

  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double lambda = 0.5;

  double slack_penalty = 1e3;
  double beta = 2.0;
  double delta = 0.05;
  InputBox U;

  /// One signal variance per augmented-input entry (p = m + 1).
  std::vector<double> signal_variance;
  /// n x p, column i for base kernel i.
  Eigen::MatrixXd lengthscales;

  /// dt, seed and noise_std are overwritten from the other blocks.
  EpisodeConfig episodic;

  double dt = 0.01;
  double horizon = 10.0;
  /// Full state: 2 entries for the pendulum, 5 for the bicycle.
  Eigen::VectorXd x0;
  /// Time-to-threshold is measured against threshold * V(x0).
  double threshold = 0.05;
  /// Slack above this counts as an activation; the min-norm trade-off alone leaves about 1/p.
  double slack_activation = 1e-2;

  Eigen::Index state_dim() const { return benchmark == Benchmark::pendulum ? 2 : 4; }
  Eigen::Index input_dim() const { return benchmark == Benchmark::pendulum ? 1 : 2; }

  /// Empty when the configuration is consistent.
  std::vector<std::string> check() const;

  /// FNV-1a of every setting that influences the learned model.
  std::uint64_t model_hash() const;
};

/// Thrown with every problem found, not just the first.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
  std::vector<std::string> diagnostics_;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

/// Diagnostics for the file at `path`; empty when it is a valid config.
std::vector<std::string> validate_config(const std::string& path);

/// Systems, CLF and controller settings described by the config.
EpisodicProblem make_problem(const ExperimentConfig& cfg);
/// Rollout start in the coordinates the controllers act on.
Eigen::VectorXd initial_state(const ExperimentConfig& cfg);
/// The episodic block with dt, seed and noise folded in.
EpisodeConfig episode_config(const ExperimentConfig& cfg);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  int episodes = 0;
  std::vector<double> levels;
  TrainingSet data;
  ADPKernel kernel{{SEKernel(1.0, Eigen::VectorXd::Ones(1))}};
  /// Hyperparameters of the input-independent baseline, when trained.
  std::optional<ADPKernel> baseline_kernel;
  double baseline_noise_std = 0.0;
};

/// JSON; doubles are written in shortest round-trip form so load(save(c))
/// restores every value exactly.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

class HashMismatch : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ControllerReport {
  std::string name;
  Trajectory trajectory;
  double final_V = 0.0;
  /// First time with V <= threshold * V(x0).
  std::optional<double> time_to_threshold;
  int slack_activations = 0;
  std::size_t fallback_steps = 0;
  double mean_latency = 0.0;
  double median_latency = 0.0;
  double max_latency = 0.0;
  std::string csv_path;

  double fallback_fraction() const;
};

struct ComparisonReport {
  Benchmark benchmark = Benchmark::pendulum;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double V0 = 0.0;
  double threshold_value = 0.0;
  RoAEstimate roa;
  std::vector<EpisodeRecord> episodes;
  std::shared_ptr<const GPModel> model;
  std::shared_ptr<const GPModel> baseline;
  double training_seconds = 0.0;
  std::vector<ControllerReport> controllers;

  const ControllerReport& controller(const std::string& name) const;
};

struct RunOptions {
  std::optional<std::string> load_checkpoint;
  bool ignore_hash = false;
  bool dump_failed_solves = false;
  /// When false nothing is written to disk.
  bool write_files = true;
};

/// Episodic training (or a checkpoint), then rollouts of clf_qp_nominal,
/// clf_qp_plant, gp_clf_qp_baseline and gp_clf_socp. Writes
/// <name>.csv, report.txt, timing.txt, episodes.log and a checkpoint per
/// episode to the output directory.
ComparisonReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Deterministic `key = value` summary.
void write_report(std::ostream& os, const ComparisonReport& report);
/// Wall-clock figures, kept apart so the report is reproducible.
void write_timing(std::ostream& os, const ComparisonReport& report);

/// p = 1 model of the mismatch as a function of x alone, on the same data.
TrainingSet state_only(const TrainingSet& data);

}  // namespace gpclf
