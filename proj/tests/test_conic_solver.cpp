#include "doctest.h"

#include <sstream>

#include "gpclf/conic_solver.hpp"
#include "oracles.hpp"

using namespace gpclf;

TEST_CASE("euclidean norm through equality-fixed variables") {
  // variables [w1, w2, t]
  ConicProgram prog(3);
  prog.c << 0, 0, 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 3);
  A(0, 0) = A(1, 1) = 1.0;
  prog.add_cone(A, Eigen::Vector2d::Zero(), Eigen::Vector3d(0, 0, 1), 0.0);
  prog.add_equality(Eigen::RowVector3d(1, 0, 0), 3.0);
  prog.add_equality(Eigen::RowVector3d(0, 1, 0), 4.0);
  const SolveResult res = solve(prog);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.w(2) == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(res.objective == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("qp with an active linear constraint") {
  // min u^2  s.t.  u <= -2  (H = 2 so 1/2 H u^2 = u^2)
  const SolveResult res = solve_qp(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1),
                                   Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -2.0));
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.w(0) == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(res.objective == doctest::Approx(4.0).epsilon(1e-7));

  const SolveResult r2 = solve_qp(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1),
                                  Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, -1.0));
  CHECK(r2.w(0) == doctest::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("unconstrained qp") {
  const SolveResult res = solve_qp(2.0 * Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3),
                                   Eigen::MatrixXd(0, 3), Eigen::VectorXd(0));
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.w.norm() < 1e-7);
}

TEST_CASE("solve_qp rejects indefinite H") {
  CHECK_THROWS_AS(solve_qp(-Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
                           Eigen::MatrixXd(0, 2), Eigen::VectorXd(0)),
                  std::invalid_argument);
}

TEST_CASE("infeasible and unbounded programs are flagged") {
  ConicProgram empty(2);
  empty.add_cone(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), -1.0);
  CHECK(solve(empty).status == SolveStatus::infeasible);
  CHECK(check_feasibility(empty).status == Feasibility::infeasible);

  ConicProgram contradicting(1);
  contradicting.c(0) = 1.0;
  contradicting.add_linear(Eigen::RowVectorXd::Constant(1, 1.0), -1.0);
  contradicting.add_linear(Eigen::RowVectorXd::Constant(1, -1.0), -1.0);
  CHECK(solve(contradicting).status == SolveStatus::infeasible);

  ConicProgram ray(1);
  ray.c(0) = 1.0;
  ray.add_linear(Eigen::RowVectorXd::Constant(1, 1.0), 1.0);
  CHECK(solve(ray).status == SolveStatus::unbounded);
}

TEST_CASE("feasibility witness inside the box") {
  ConicProgram prog(2);
  prog.add_cone(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 1.0);
  prog.add_bounds(0, -0.5, 0.5);
  prog.add_bounds(1, -0.5, 0.5);
  const FeasibilityResult res = check_feasibility(prog);
  REQUIRE(res.status == Feasibility::feasible);
  CHECK(prog.max_violation(res.witness) <= 1e-7);
  CHECK(res.witness.cwiseAbs().maxCoeff() <= 0.5 + 1e-7);
}

TEST_CASE("planted-optimum SOCPs") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + trial % 5);
    const auto planted = oracle::planted_socp(rng, d);
    const SolveResult res = solve(planted.prog);
    INFO("trial " << trial);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(std::abs(res.objective - planted.objective) < 1e-5);
    CHECK(planted.prog.max_violation(res.w) <= 1e-7);
  }
}

TEST_CASE("two-dimensional SOCPs against a refined grid") {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    // minimize c^T w over a disc intersected with a box
    const Eigen::Vector2d center = oracle::random_matrix(rng, 2, 1, -0.5, 0.5);
    const double radius = oracle::uniform(rng, 0.3, 0.8);
    const Eigen::Vector2d c = oracle::random_matrix(rng, 2, 1);
    ConicProgram prog(2);
    prog.c = c;
    prog.add_cone(Eigen::Matrix2d::Identity(), -center, Eigen::Vector2d::Zero(), radius);
    prog.add_bounds(0, -0.6, 0.6);
    prog.add_bounds(1, -0.6, 0.6);
    const SolveResult res = solve(prog);
    REQUIRE(res.status == SolveStatus::optimal);
    const auto [w, val] = oracle::grid_minimize_2d(
        [&](const Eigen::Vector2d& p) {
          return (p - center).norm() <= radius ? c.dot(p) : std::numeric_limits<double>::infinity();
        },
        Eigen::Vector2d(-0.6, -0.6), Eigen::Vector2d(0.6, 0.6), 1e-3, 3);
    CHECK(std::abs(res.objective - val) < 1e-5);
    // when the disc minimizer lies inside the box it is known in closed form
    const Eigen::Vector2d disc_opt = center - radius * c / c.norm();
    if (disc_opt.cwiseAbs().maxCoeff() <= 0.6) CHECK(std::abs(res.objective - c.dot(disc_opt)) < 1e-7);
  }
}

TEST_CASE("random QPs against active-set enumeration") {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + trial % 5);
    const auto m = static_cast<Eigen::Index>(trial % 6);
    const Eigen::MatrixXd B = oracle::random_matrix(rng, d, d);
    const Eigen::MatrixXd H = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd q = oracle::random_matrix(rng, d, 1, -2.0, 2.0);
    const Eigen::MatrixXd G = oracle::random_matrix(rng, m, d);
    const Eigen::VectorXd w0 = oracle::random_matrix(rng, d, 1);
    const Eigen::VectorXd r = G * w0 + oracle::random_matrix(rng, m, 1, 0.0, 0.5);
    const auto ref = oracle::qp_active_set(H, q, G, r);
    REQUIRE(ref.has_value());
    const SolveResult res = solve_qp(H, q, G, r);
    INFO("trial " << trial);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK((res.w - *ref).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("objective scaling leaves the minimizer unchanged") {
  oracle::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto planted = oracle::planted_socp(rng, 3);
    const SolveResult a = solve(planted.prog);
    planted.prog.c *= 7.5;
    const SolveResult b = solve(planted.prog);
    REQUIRE(a.status == SolveStatus::optimal);
    REQUIRE(b.status == SolveStatus::optimal);
    // planted problems may have non-unique minimizers; compare the objective per unit scale
    CHECK(std::abs(b.objective / 7.5 - a.objective) < 1e-6);
  }
  // strictly convex case where the argmin is unique
  ConicProgram prog(3);
  prog.c << 0.3, -0.2, 1.0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 3);
  A(0, 0) = A(1, 1) = 1.0;
  prog.add_cone(A, Eigen::Vector2d(-0.1, 0.2), Eigen::Vector3d(0, 0, 1), 0.0);
  prog.add_bounds(0, -1, 1);
  prog.add_bounds(1, -1, 1);
  const SolveResult base = solve(prog);
  prog.c *= 3.0;
  const SolveResult scaled = solve(prog);
  CHECK((base.w - scaled.w).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("repeated solves are bitwise identical") {
  oracle::Rng rng(21);
  const auto planted = oracle::planted_socp(rng, 4);
  const SolveResult a = solve(planted.prog);
  const SolveResult b = solve(planted.prog);
  CHECK(a.iterations == b.iterations);
  CHECK(a.w == b.w);
  CHECK(a.objective == b.objective);
}

TEST_CASE("problem dump names every block") {
  ConicProgram prog(2);
  prog.add_cone(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), 1.0);
  prog.add_bounds(0, -1, 1);
  std::ostringstream os;
  dump_problem(os, prog);
  const std::string text = os.str();
  CHECK(text.find("%%ConicProgram dim 2 cones 1") == 0);
  CHECK(text.find("cone0.A") != std::string::npos);
  CHECK(text.find("%% G") != std::string::npos);
}
