#include "doctest.h"

#include "gpclf/controllers.hpp"
#include "oracles.hpp"

using namespace gpclf;

namespace {

ControlAffineSystem integrator() {
  ControlAffineSystem s;
  s.state_dim = 1;
  s.input_dim = 1;
  s.f = [](const Eigen::VectorXd&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(1); };
  s.g = [](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Ones(1, 1); };
  return s;
}

ControllerConfig pendulum_config(double beta = 2.0) {
  ControllerConfig cfg;
  cfg.lambda = 0.5;
  cfg.slack_penalty = 1e3;
  cfg.U = InputBox::symmetric(1, 10.0);
  cfg.beta = beta;
  return cfg;
}

struct PendulumFixture {
  ControlAffineSystem nominal = pendulum(PendulumParams{1.0});
  ControlAffineSystem plant = pendulum(PendulumParams{2.0});
  QuadraticCLF clf = clf_from_lqr(nominal, Eigen::Matrix2d::Identity(), Eigen::MatrixXd::Ones(1, 1));
  ADPKernel kernel{{SEKernel(4.0, Eigen::Vector2d(0.6, 1.2)), SEKernel(1.0, Eigen::Vector2d(0.6, 1.2))}};

  // exact mismatch labels on random (x, u) with small noise
  GPModel trained(int N, std::uint64_t seed, double noise = 0.01) const {
    oracle::Rng rng(seed);
    TrainingSet t = TrainingSet::empty(2, 2, noise);
    std::normal_distribution<double> eps(0.0, noise);
    for (int j = 0; j < N; ++j) {
      const Eigen::Vector2d x = oracle::random_matrix(rng, 2, 1, -0.8, 0.8);
      const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, oracle::uniform(rng, -10, 10));
      t.append(x, Eigen::Vector2d(1.0, u(0)), mismatch(clf, plant, nominal, x, u) + eps(rng));
    }
    return GPModel(kernel, t);
  }
};

// min over u in U of u^2 + p max(0, h(u))^2 by a refined 1-D grid.
template <typename H>
double grid_objective(H&& h, double lo, double hi, double p) {
  auto cost = [&](double u) {
    const double d = std::max(0.0, h(u));
    return u * u + p * d * d;
  };
  double best_u = lo, best = cost(lo);
  double step = 1e-3;
  for (double u = lo; u <= hi; u += step)
    if (cost(u) < best) best = cost(u), best_u = u;
  for (int level = 0; level < 4; ++level) {
    const double a = std::max(lo, best_u - step), b = std::min(hi, best_u + step);
    step /= 100.0;
    for (double u = a; u <= b; u += step)
      if (cost(u) < best) best = cost(u), best_u = u;
  }
  return best;
}

}  // namespace

TEST_CASE("clf-qp at the origin does nothing") {
  const PendulumFixture fx;
  const ControlOutput out = clf_qp(fx.nominal, fx.clf, pendulum_config(), Eigen::Vector2d::Zero());
  CHECK(out.status == SolveStatus::optimal);
  CHECK(std::abs(out.u(0)) < 1e-9);
  CHECK(std::abs(out.slack) < 1e-9);
}

TEST_CASE("scalar clf-qp closed form") {
  // xdot = u, V = x^2, lambda = 1, x = 1: constraint 2u + 1 <= d
  const ControlAffineSystem sys = integrator();
  const QuadraticCLF v(Eigen::MatrixXd::Ones(1, 1));
  ControllerConfig cfg;
  cfg.lambda = 1.0;
  cfg.U = InputBox::symmetric(1, 10.0);
  for (double p : {1.0, 10.0, 1e3, 1e6}) {
    cfg.slack_penalty = p;
    const ControlOutput out = clf_qp(sys, v, cfg, Eigen::VectorXd::Ones(1));
    REQUIRE(out.status == SolveStatus::optimal);
    CHECK(out.u(0) == doctest::Approx(-2 * p / (1 + 4 * p)).epsilon(1e-7));
    CHECK(out.slack == doctest::Approx(1 / (1 + 4 * p)).epsilon(1e-6));
  }
  cfg.slack_penalty = 1e6;
  CHECK(std::abs(clf_qp(sys, v, cfg, Eigen::VectorXd::Ones(1)).u(0) + 0.5) < 1e-6);

  // tight box: the input saturates and the slack takes the rest
  cfg.U = InputBox::symmetric(1, 0.2);
  cfg.slack_penalty = 1e3;
  const ControlOutput sat = clf_qp(sys, v, cfg, Eigen::VectorXd::Ones(1));
  CHECK(sat.u(0) == doctest::Approx(-0.2));
  CHECK(sat.slack == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("clf-qp decays V exponentially on the nominal pendulum") {
  const PendulumFixture fx;
  const ControllerConfig cfg = pendulum_config();
  RolloutOptions opt;
  opt.horizon = 3.0;
  opt.dt = 0.01;
  const Trajectory traj =
      rollout(fx.nominal, [&](const Eigen::VectorXd& x) { return clf_qp(fx.nominal, fx.clf, cfg, x); },
              [&](const Eigen::VectorXd& x) { return fx.clf.value(x); }, Eigen::Vector2d(0.3, 0.0), opt);
  const double v0 = traj.records.front().V;
  double max_slack = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    CHECK(traj.records[k].V < traj.records[k - 1].V);
    max_slack = std::max(max_slack, traj.records[k].slack);
  }
  // the slack trades off against input effort, so it is small but not zero
  CHECK(max_slack < 1e-2);
  // rate slightly below lambda to absorb the sample-and-hold error
  for (const auto& r : traj.records) CHECK(r.V <= v0 * std::exp(-0.45 * r.t) + 1e-12);
}

TEST_CASE("gp-clf-socp without data and beta = 0 is the nominal clf-qp") {
  const PendulumFixture fx;
  const GPModel empty(fx.kernel, TrainingSet::empty(2, 2, 0.01));
  const ControllerConfig cfg = pendulum_config(0.0);
  oracle::Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -1, 1);
    const ControlOutput a = gp_clf_socp(fx.nominal, fx.clf, empty, cfg, x);
    const ControlOutput b = clf_qp(fx.nominal, fx.clf, cfg, x);
    REQUIRE(a.status == SolveStatus::optimal);
    CHECK(std::abs(a.u(0) - b.u(0)) < 1e-6);
    CHECK(std::abs(a.slack - b.slack) < 1e-6);

    const GPModel state_empty(ADPKernel({fx.kernel.base(0)}), TrainingSet::empty(2, 1, 0.01));
    const ControlOutput c = gp_clf_qp_baseline(fx.nominal, fx.clf, state_empty, cfg, x);
    CHECK(std::abs(c.u(0) - b.u(0)) < 1e-6);
  }
}

TEST_CASE("socp solution satisfies its own chance constraint") {
  const PendulumFixture fx;
  const GPModel gp = fx.trained(60, 2);
  const ControllerConfig cfg = pendulum_config(2.0);
  oracle::Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -1, 1);
    const ControlOutput out = gp_clf_socp(fx.nominal, fx.clf, gp, cfg, x);
    REQUIRE(out.status == SolveStatus::optimal);
    CHECK(cfg.U.contains(out.u));
    CHECK(gp_constraint_margin(fx.nominal, fx.clf, gp, cfg.beta, cfg.lambda, x, out.u, out.slack) <= 1e-6);
  }
}

TEST_CASE("socp objective matches a brute-force scan over the input") {
  const PendulumFixture fx;
  const GPModel gp = fx.trained(80, 4);
  const ControllerConfig cfg = pendulum_config(2.0);
  oracle::Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -1.2, 1.2);
    const ControlOutput out = gp_clf_socp(fx.nominal, fx.clf, gp, cfg, x);
    REQUIRE(out.status == SolveStatus::optimal);
    const double got = out.u.squaredNorm() + cfg.slack_penalty * out.slack * out.slack;
    const double ref = grid_objective(
        [&](double u) {
          return gp_constraint_margin(fx.nominal, fx.clf, gp, cfg.beta, cfg.lambda, x, Eigen::VectorXd::Constant(1, u),
                                      0.0);
        },
        -10.0, 10.0, cfg.slack_penalty);
    INFO("state " << x.transpose());
    CHECK(std::abs(got - ref) <= 1e-4 * std::max(1.0, ref));
  }
}

TEST_CASE("larger beta never lowers the optimal cost") {
  const PendulumFixture fx;
  const GPModel gp = fx.trained(40, 6);
  oracle::Rng rng(7);
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -1, 1);
    double prev = -1.0;
    for (double beta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const ControllerConfig cfg = pendulum_config(beta);
      const ControlOutput out = gp_clf_socp(fx.nominal, fx.clf, gp, cfg, x);
      REQUIRE(out.status == SolveStatus::optimal);
      const double cost = out.u.squaredNorm() + cfg.slack_penalty * out.slack * out.slack;
      CHECK(cost >= prev - 1e-6 * (1 + prev));
      prev = cost;
    }
  }
}

TEST_CASE("with dense data and a shifted drift the socp tracks the plant controller") {
  const PendulumFixture base;
  ControlAffineSystem plant = base.nominal;
  plant.f = [f = base.nominal.f](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return f(x) + Eigen::Vector2d(0.0, 0.5);
  };
  oracle::Rng rng(8);
  TrainingSet t = TrainingSet::empty(2, 2, 1e-3);
  for (int j = 0; j < 300; ++j) {
    const Eigen::Vector2d x = oracle::random_matrix(rng, 2, 1, -1, 1);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, oracle::uniform(rng, -10, 10));
    t.append(x, Eigen::Vector2d(1.0, u(0)), mismatch(base.clf, plant, base.nominal, x, u));
  }
  const ADPKernel kernel({SEKernel(4.0, Eigen::Vector2d(1.5, 1.5)), SEKernel(0.1, Eigen::Vector2d(1.5, 1.5))});
  const GPModel gp(kernel, t);
  const ControllerConfig cfg = pendulum_config(0.0);
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -0.7, 0.7);
    const ControlOutput learned = gp_clf_socp(base.nominal, base.clf, gp, cfg, x);
    const ControlOutput truth = clf_qp(plant, base.clf, cfg, x);
    CHECK(std::abs(learned.u(0) - truth.u(0)) < 1e-2);
  }

  // the baseline's assumption holds here too (g is exact)
  TrainingSet ts = TrainingSet::empty(2, 1, 1e-3);
  ts.X = t.X;
  ts.Y = Eigen::MatrixXd::Ones(1, t.size());
  ts.z = t.z;
  const GPModel state_gp(ADPKernel({SEKernel(4.0, Eigen::Vector2d(1.5, 1.5))}), ts);
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd x = oracle::random_matrix(rng, 2, 1, -0.7, 0.7);
    const ControlOutput learned = gp_clf_qp_baseline(base.nominal, base.clf, state_gp, cfg, x);
    const ControlOutput truth = clf_qp(plant, base.clf, cfg, x);
    CHECK(std::abs(learned.u(0) - truth.u(0)) < 1e-2);
  }
}

TEST_CASE("solver failures fall back and are reported") {
  const PendulumFixture fx;
  ControllerConfig cfg = pendulum_config();
  cfg.solver.max_iters = 0;
  cfg.fallback = Eigen::VectorXd::Constant(1, 0.25);
  int failures = 0;
  cfg.on_failure = [&](const ConicProgram& prog, const Eigen::VectorXd& x) {
    ++failures;
    CHECK(prog.dim() >= 2);
    CHECK(x.size() == 2);
  };
  const ControlOutput out = gp_clf_socp(fx.nominal, fx.clf, fx.trained(20, 9), cfg, Eigen::Vector2d(0.4, 0.1));
  CHECK(out.fallback);
  CHECK(out.status == SolveStatus::max_iters);
  CHECK(out.u(0) == 0.25);
  CHECK(failures == 1);
  const ControlOutput q = clf_qp(fx.nominal, fx.clf, cfg, Eigen::Vector2d(0.4, 0.1));
  CHECK(q.fallback);
  CHECK(failures == 2);
}

TEST_CASE("configuration checks") {
  ControllerConfig cfg = pendulum_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = pendulum_config();
  cfg.U = InputBox{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 2.0)};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  const PendulumFixture fx;
  const GPModel wrong(ADPKernel({fx.kernel.base(0)}), TrainingSet::empty(2, 1, 0.1));
  CHECK_THROWS_AS(gp_clf_socp(fx.nominal, fx.clf, wrong, pendulum_config(), Eigen::Vector2d::Zero()),
                  std::invalid_argument);
}
