// Acceptance checks, one line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gpclf/experiment.hpp"
#include "oracles.hpp"

using namespace gpclf;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

TrainingSet random_set(oracle::Rng& rng, Eigen::Index n, Eigen::Index p, Eigen::Index N, double noise) {
  TrainingSet t = TrainingSet::empty(n, p, noise);
  for (Eigen::Index j = 0; j < N; ++j) {
    Eigen::VectorXd y = oracle::random_matrix(rng, p, 1, -2, 2);
    y(0) = 1.0;
    t.append(oracle::random_matrix(rng, n, 1, -1.5, 1.5), y, oracle::uniform(rng, -1, 1));
  }
  return t;
}

// ------------------------------------------------------------------ 1

Outcome structured_posterior() {
  const auto t0 = Clock::now();
  oracle::Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index p = 2 + trial % 2, n = 1 + trial % 4;
    const auto N = static_cast<Eigen::Index>(oracle::uniform(rng, 0.0, 30.999));
    const ADPKernel kc = oracle::random_adp(rng, n, p);
    const TrainingSet t = random_set(rng, n, p, N, oracle::uniform(rng, 0.05, 0.5));
    const GPModel model(kc, t);
    const Eigen::VectorXd xs = oracle::random_matrix(rng, n, 1, -1.5, 1.5);
    Eigen::VectorXd ys = oracle::random_matrix(rng, p, 1, -2, 2);
    ys(0) = 1.0;
    const StructuredPosterior post = posterior_adp(model, xs);
    const auto [m_ref, v_ref] = oracle::generic_posterior_dense(kc, t.X, t.Y, t.z,
                                                                t.noise_std * t.noise_std + model.jitter(), xs, ys);
    const Prediction gen = posterior_generic(model, xs, ys);
    worst = std::max({worst, std::abs(post.mean(ys) - m_ref), std::abs(post.variance(ys) - std::max(0.0, v_ref)),
                      std::abs(post.mean(ys) - gen.mean), std::abs(post.variance(ys) - gen.variance)});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0, fmt("500 instances, max abs error %.2e, %.2f s", worst, secs)};
}

// ------------------------------------------------------------------ 2

Outcome gram_psd() {
  const auto t0 = Clock::now();
  oracle::Rng rng(102);
  double worst_ratio = -std::numeric_limits<double>::infinity();
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index p = 2 + trial % 2, n = 1 + trial % 3;
    const auto N = static_cast<Eigen::Index>(oracle::uniform(rng, 2.0, 40.999));
    const ADPKernel kc = oracle::random_adp(rng, n, p);
    Eigen::MatrixXd X = oracle::random_matrix(rng, n, N, -1, 1);
    if (trial % 5 == 0) X.col(1) = X.col(0);
    Eigen::MatrixXd Y = oracle::random_matrix(rng, p, N, -3, 3);
    Y.row(0).setOnes();
    const Eigen::MatrixXd K = gram_adp(kc, X, Y);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().minCoeff();
    const double floor = 1e-9 * K.trace() / static_cast<double>(N);
    ok = ok && min_eig >= -floor;
    worst_ratio = std::max(worst_ratio, -min_eig / floor);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 5.0, fmt("200 Gram matrices, worst -lambda_min / floor = %.2e, %.2f s", worst_ratio, secs)};
}

// ------------------------------------------------------------------ 3

Outcome socp_structure() {
  oracle::Rng rng(103);
  double fit = 0.0, recon = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index p = 2 + trial % 2, n = 2;
    const ADPKernel kc = oracle::random_adp(rng, n, p);
    const GPModel model(kc, random_set(rng, n, p, 5 + trial % 20, oracle::uniform(rng, 0.05, 0.3)));
    const StructuredPosterior post = posterior_adp(model, oracle::random_matrix(rng, n, 1, -1.5, 1.5));
    const ConeFactors cf = socp_factors(post);
    const Eigen::VectorXd u0 = oracle::random_matrix(rng, p - 1, 1, -3, 3);
    const Eigen::VectorXd dir = oracle::random_matrix(rng, p - 1, 1);
    // least-squares polynomial fits along u(s) = u0 + s dir on 9 points
    const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(9, -2.0, 2.0);
    Eigen::MatrixXd V(9, 3);
    Eigen::VectorXd mu(9), var(9);
    for (Eigen::Index k = 0; k < 9; ++k) {
      Eigen::VectorXd y(p);
      y << 1.0, u0 + s(k) * dir;
      V.row(k) << 1.0, s(k), s(k) * s(k);
      mu(k) = post.mean(y);
      var(k) = y.dot(post.C * y);
      recon = std::max(recon, std::abs((cf.M * (u0 + s(k) * dir) + cf.n).squaredNorm() - var(k)));
    }
    const Eigen::MatrixXd V1 = V.leftCols(2);
    const Eigen::VectorXd r1 = mu - V1 * V1.colPivHouseholderQr().solve(mu);
    const Eigen::VectorXd r2 = var - V * V.colPivHouseholderQr().solve(var);
    fit = std::max({fit, r1.cwiseAbs().maxCoeff(), r2.cwiseAbs().maxCoeff()});
  }
  return {fit < 1e-10 && recon <= 1e-9,
          fmt("100 rays, fit residual %.2e, factor reconstruction %.2e", fit, recon)};
}

// ------------------------------------------------------------------ 4

Outcome solver_correctness() {
  oracle::Rng rng(104);
  double obj_err = 0.0, viol = 0.0;
  int failures = 0;
  bool deterministic = true;
  auto same = [](const SolveResult& a, const SolveResult& b) {
    return a.w.size() == b.w.size() && std::memcmp(a.w.data(), b.w.data(), sizeof(double) * a.w.size()) == 0 &&
           std::memcmp(&a.objective, &b.objective, sizeof(double)) == 0 && a.iterations == b.iterations;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + trial % 5);
    const auto planted = oracle::planted_socp(rng, d);
    const SolveResult a = solve(planted.prog), b = solve(planted.prog);
    if (a.status != SolveStatus::optimal) {
      ++failures;
      continue;
    }
    deterministic = deterministic && same(a, b);
    obj_err = std::max(obj_err, std::abs(a.objective - planted.objective));
    viol = std::max(viol, planted.prog.max_violation(a.w));
  }
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + trial % 6);
    const auto m = static_cast<Eigen::Index>(trial % 7);
    const Eigen::MatrixXd B = oracle::random_matrix(rng, d, d);
    const Eigen::MatrixXd H = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd q = oracle::random_matrix(rng, d, 1, -2.0, 2.0);
    const Eigen::MatrixXd G = oracle::random_matrix(rng, m, d);
    const Eigen::VectorXd r = G * oracle::random_matrix(rng, d, 1) + oracle::random_matrix(rng, m, 1, 0.0, 0.5);
    const auto ref = oracle::qp_active_set(H, q, G, r);
    const SolveResult a = solve_qp(H, q, G, r), b = solve_qp(H, q, G, r);
    if (!ref || a.status != SolveStatus::optimal) {
      ++failures;
      continue;
    }
    deterministic = deterministic && same(a, b);
    auto f = [&](const Eigen::VectorXd& w) { return 0.5 * w.dot(H * w) + q.dot(w); };
    obj_err = std::max(obj_err, std::abs(f(a.w) - f(*ref)));
    if (m > 0) viol = std::max(viol, (G * a.w - r).maxCoeff());
  }
  return {failures == 0 && obj_err <= 1e-5 && viol <= 1e-7 && deterministic,
          fmt("200 SOCPs + 200 QPs, %d non-optimal, objective error %.2e, violation %.2e, %s", failures, obj_err,
              viol, deterministic ? "bitwise repeatable" : "NOT repeatable")};
}

// ------------------------------------------------------------------ 5

Outcome measurement_order() {
  const ControlAffineSystem nominal = pendulum(PendulumParams{});
  const ControlAffineSystem plant = pendulum(PendulumParams{2.0});
  const QuadraticCLF clf = clf_from_lqr(nominal, Eigen::Matrix2d::Identity(), Eigen::MatrixXd::Ones(1, 1));
  ControllerConfig cc;
  cc.U = InputBox::symmetric(1, 10.0);
  const Controller ctrl = [&](const Eigen::VectorXd& x) { return clf_qp(nominal, clf, cc, x); };
  // mean label error over one second of a noiseless closed-loop rollout
  auto error = [&](double dt) {
    RolloutOptions ro;
    ro.horizon = 1.0;
    ro.dt = dt;
    const Trajectory tr =
        rollout(plant, ctrl, [&](const Eigen::VectorXd& x) { return clf.value(x); }, Eigen::Vector2d(0.2, 0.0), ro);
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
      const Measurement m = make_measurement(clf, nominal, tr.records[k].x, tr.records[k + 1].x, tr.records[k].u, dt);
      sum += std::abs(m.z - mismatch(clf, plant, nominal, m.x, m.u));
    }
    return sum / static_cast<double>(tr.size() - 1);
  };
  const double ratio = error(0.01) / error(0.005);
  return {ratio >= 3.2 && ratio <= 4.8, fmt("error ratio dt / (dt/2) = %.3f", ratio)};
}

// ------------------------------------------------------------------ 6

Outcome ucb_containment() {
  oracle::Rng rng(106);
  const ADPKernel kc({SEKernel(1.0, Eigen::Vector2d(0.8, 1.1)), SEKernel(0.5, Eigen::Vector2d(1.2, 0.9))});
  const Eigen::Index N = 80, M = 1000;
  Eigen::MatrixXd X = oracle::random_matrix(rng, 2, N + M, -2, 2);
  Eigen::MatrixXd Y = oracle::random_matrix(rng, 2, N + M, -2, 2);
  Y.row(0).setOnes();
  Eigen::MatrixXd K = gram_adp(kc, X, Y);
  K.diagonal().array() += 1e-9 * K.trace() / static_cast<double>(K.rows());
  std::normal_distribution<double> normal;
  Eigen::VectorXd e(K.rows());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
  const Eigen::VectorXd f = Eigen::LLT<Eigen::MatrixXd>(K).matrixL() * e;
  const double sn = 0.05;
  std::normal_distribution<double> noise(0.0, sn);
  TrainingSet t = TrainingSet::empty(2, 2, sn);
  for (Eigen::Index j = 0; j < N; ++j) t.append(X.col(j), Y.col(j), f(j) + noise(rng));
  const GPModel model(kc, t);
  UCBConfig ucb;
  ucb.delta = 0.05;
  const double b = beta(ucb, N);
  int inside = 0;
  for (Eigen::Index j = N; j < N + M; ++j) {
    const StructuredPosterior post = posterior_adp(model, X.col(j));
    if (std::abs(post.mean(Y.col(j)) - f(j)) <= b * post.stddev(Y.col(j))) ++inside;
  }
  const double frac = static_cast<double>(inside) / static_cast<double>(M);
  return {frac >= 0.93, fmt("beta = %.1f, containment %.3f on %ld held-out points", b, frac, static_cast<long>(M))};
}

// ------------------------------------------------------------------ 7, 8, 10

struct PendulumRun {
  ExperimentConfig cfg;
  EpisodicProblem problem;
  ComparisonReport report;
  double seconds = 0.0;
};

PendulumRun& pendulum_run() {
  static PendulumRun run = [] {
    ExperimentConfig cfg = load_config(std::string(GPCLF_SOURCE_DIR) + "/configs/pendulum.ini");
    cfg.output_dir = "acceptance_out/pendulum";
    EpisodicProblem problem = make_problem(cfg);
    const auto t0 = Clock::now();
    ComparisonReport report = run_experiment(cfg);
    return PendulumRun{std::move(cfg), std::move(problem), std::move(report), seconds_since(t0)};
  }();
  return run;
}

// true Vdot + lambda V minus the slack the controller allowed itself
double audit_excess(const EpisodicProblem& prob, const ControlOutput& out, const Eigen::VectorXd& x) {
  const LieDerivatives lie = lie_derivatives(prob.clf, prob.plant, x);
  return lie.vdot(out.u) + prob.controller.lambda * prob.clf.value(x) - out.slack;
}

Outcome pendulum_experiment() {
  const PendulumRun& run = pendulum_run();
  const ComparisonReport& r = run.report;
  const auto& socp = r.controller("gp_clf_socp");
  const auto& plant = r.controller("clf_qp_plant");
  const auto& nominal = r.controller("clf_qp_nominal");
  const bool a = socp.final_V <= 1.2 * plant.final_V;
  const bool b = socp.time_to_threshold && (!nominal.time_to_threshold || *socp.time_to_threshold < *nominal.time_to_threshold);

  // audit both GP controllers on the states the baseline visits; the
  // model's confidence claim only covers the certified level set, so the
  // pass condition is judged there
  const EpisodicProblem& prob = run.problem;
  const double tol = 1e-6;
  const double c_final = r.roa.levels.back();
  int base_bad = 0, socp_bad = 0, audited = 0, base_only = 0, visited = 0;
  for (const TrajectoryRecord& rec : r.controller("gp_clf_qp_baseline").trajectory.records) {
    const Eigen::VectorXd& x = rec.x;
    if (x.norm() < 1e-9) continue;
    const ControlOutput ob = gp_clf_qp_baseline(prob.nominal, prob.clf, *r.baseline, prob.controller, x);
    const ControlOutput os = gp_clf_socp(prob.nominal, prob.clf, *r.model, prob.controller, x);
    const bool vb = audit_excess(prob, ob, x) > tol, vs = audit_excess(prob, os, x) > tol;
    ++visited;
    base_only += vb && !vs;
    if (prob.clf.value(x) > c_final) continue;
    ++audited;
    base_bad += vb;
    socp_bad += vs;
  }
  const bool c = base_bad > 0 && socp_bad == 0;
  const bool fast = run.seconds < 300.0;
  auto t2s = [](const std::optional<double>& t) { return t ? fmt("%.2f s", *t) : std::string("never"); };
  return {a && b && c && fast,
          fmt("(a) V(T) socp %.4g vs plant %.4g [%s]; (b) time to 5%%: socp %s, nominal %s [%s]; "
              "(c) audit on %d states with V <= %.2f: baseline %d violations, socp %d [%s] "
              "(baseline-only violations on all %d visited states: %d); %.1f s",
              socp.final_V, plant.final_V, a ? "ok" : "FAIL", t2s(socp.time_to_threshold).c_str(),
              t2s(nominal.time_to_threshold).c_str(), b ? "ok" : "FAIL", audited, c_final, base_bad, socp_bad,
              c ? "ok" : "FAIL", visited, base_only, run.seconds)};
}

Outcome episodic_algorithm() {
  const PendulumRun& run = pendulum_run();
  const ComparisonReport& r = run.report;
  const std::vector<double>& c = r.roa.levels;
  bool levels_ok = c.size() == 8;
  for (std::size_t i = 1; i < c.size(); ++i) levels_ok = levels_ok && c[i] >= c[i - 1];
  bool sigma_ok = true;
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < r.episodes.size(); ++i) {
    const double ratio = r.episodes[i].probe_mean_sigma / r.episodes[i - 1].probe_mean_sigma;
    worst_rise = std::max(worst_rise, ratio - 1.0);
    sigma_ok = sigma_ok && ratio <= 1.05;
  }
  const EpisodicProblem& prob = run.problem;
  const Controller ctrl = [&](const Eigen::VectorXd& x) {
    return gp_clf_socp(prob.nominal, prob.clf, *r.model, prob.controller, x);
  };
  const double c0 = run.cfg.episodic.c0;
  const double frac = validate_region(prob.plant, ctrl, prob.clf, r.roa.final_level(), c0 / 10, 100, 20.0,
                                      run.cfg.dt, 0xB0DE);
  const Eigen::Index n = r.model->size();
  const bool size_ok = n >= 200 && n <= 800;
  std::string levels;
  for (double v : c) levels += fmt(" %.3g", v);
  return {levels_ok && sigma_ok && frac >= 0.95 && size_ok,
          fmt("levels%s [%s]; largest mean-sigma rise %+.1f%% [%s]; %.0f%% of 100 boundary starts reach V < %.3g "
              "[%s]; %ld data points [%s]",
              levels.c_str(), levels_ok ? "ok" : "FAIL", 100 * worst_rise, sigma_ok ? "ok" : "FAIL", 100 * frac,
              c0 / 10, frac >= 0.95 ? "ok" : "FAIL", static_cast<long>(n), size_ok ? "ok" : "FAIL")};
}

Outcome latency() {
  const auto& socp = pendulum_run().report.controller("gp_clf_socp");
  return {socp.median_latency <= 0.050,
          fmt("median socp step %.2f ms (max %.2f ms) with %ld data points", 1e3 * socp.median_latency,
              1e3 * socp.max_latency, static_cast<long>(pendulum_run().report.model->size()))};
}

// ------------------------------------------------------------------ 9

// sign changes of V(t_{k+1}) - V(t_k) for t_k >= t_from, ignoring exact zeros
int sign_changes(const Trajectory& tr, double t_from) {
  int changes = 0, last = 0;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
    if (tr.records[k].t < t_from - 1e-9) continue;
    const double dv = tr.records[k + 1].V - tr.records[k].V;
    const int s = (dv > 0) - (dv < 0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

Outcome bicycle_experiment() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = load_config(std::string(GPCLF_SOURCE_DIR) + "/configs/bicycle.ini");
  cfg.output_dir = "acceptance_out/bicycle";
  const ComparisonReport r = run_experiment(cfg);
  const double secs = seconds_since(t0);
  const Trajectory& nom = r.controller("clf_qp_nominal").trajectory;
  const Trajectory& socp = r.controller("gp_clf_socp").trajectory;
  const int nom_changes = sign_changes(nom, 2.0), socp_changes = sign_changes(socp, 2.0);
  double floor = std::numeric_limits<double>::infinity();
  for (const TrajectoryRecord& rec : nom.records)
    if (rec.t >= 2.0) floor = std::min(floor, rec.V);
  bool monotone = true;
  for (std::size_t k = 0; k + 1 < socp.size(); ++k)
    if (socp.records[k].t >= 2.0 && socp.records[k + 1].V > socp.records[k].V) monotone = false;
  const double socp_final = socp.records.back().V;
  const bool ok = nom_changes >= 3 && monotone && socp_final < floor && secs < 600.0;
  return {ok, fmt("nominal dV sign changes after 2 s: %d, oscillation floor %.3g; socp sign changes %d, %s, "
                  "final V %.3g; %ld data points; %.1f s",
                  nom_changes, floor, socp_changes, monotone ? "monotone" : "NOT monotone", socp_final,
                  static_cast<long>(r.model->size()), secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"structured posterior matches the generic formulas", structured_posterior},
      {"ADP Gram matrices are PSD", gram_psd},
      {"posterior is affine / quadratic in u and the cone factors are exact", socp_structure},
      {"conic solver against oracles", solver_correctness},
      {"measurement error is second order in dt", measurement_order},
      {"UCB containment", ucb_containment},
      {"pendulum controller comparison", pendulum_experiment},
      {"episodic region of attraction", episodic_algorithm},
      {"bicycle tracking", bicycle_experiment},
      {"GP-CLF-SOCP step latency", latency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%-4s criterion %2zu  %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed;
}
