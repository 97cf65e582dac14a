#include <random>
#include <sstream>

#include "brs/sdp.hpp"
#include "doctest.h"

using namespace brs;

TEST_CASE("psd iff x >= 1: maximize -x") {
  SdpProblem prob;
  const int x = prob.add_variable();
  auto& blk = prob.add_block(2);
  blk.add_coeff(x, 0, 0, 1.0);
  blk.add_coeff(x, 1, 1, 1.0);
  blk.add_constant(1, 0, 1.0);
  prob.add_objective(x, -1.0);

  const SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.y[x] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.objective == doctest::Approx(-1.0).epsilon(1e-5));

  // Weak duality bound from hand-built dual points Z >= 0 with tr(Z) = 1:
  // bound = <G0, Z> = 2 Z01. A strictly feasible Z gives a valid bound, the
  // optimal (singular) Z pins the objective.
  CHECK(sol.objective <= 2.0 * (-0.48) + 1e-5);
  CHECK(std::abs(sol.objective - 2.0 * (-0.5)) <= 1e-5);
}

TEST_CASE("constant negative block is infeasible") {
  SdpProblem prob;
  auto& blk = prob.add_block(1);
  blk.add_constant(0, 0, -1.0);
  const SdpSolution sol = solve(prob);
  CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("feasibility with pinned variable") {
  SdpProblem prob;
  const int x = prob.add_variable();
  auto& blk = prob.add_block(1);
  blk.add_coeff(x, 0, 0, 1.0);
  prob.add_equality({{{x, 1.0}}, 5.0});
  const SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.y[x] == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("verify_solution reports block eigenvalues and residuals") {
  SdpProblem prob;
  prob.add_variables(1);
  auto& b1 = prob.add_block(2);
  b1.add_constant(0, 0, 1.0);
  b1.add_constant(1, 1, 1.0);
  auto& b2 = prob.add_block(2);
  b2.add_constant(1, 0, 1.0);
  prob.add_equality({{{0, 2.0}}, 4.0});

  Eigen::VectorXd y(1);
  y << 2.0;
  const VerifyReport rep = verify_solution(prob, y, 1e-8);
  CHECK(rep.block_min_eig[0] == doctest::Approx(1.0));
  CHECK(rep.block_min_eig[1] == doctest::Approx(-1.0));
  CHECK(rep.max_equality_residual == doctest::Approx(0.0));
  CHECK_FALSE(rep.pass);

  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(verify_solution(prob, bad, 1e-8), std::invalid_argument);
}

TEST_CASE("two incompatible one-by-one blocks are infeasible") {
  SdpProblem prob;
  const int x = prob.add_variable();
  prob.add_block(1).add_coeff(x, 0, 0, 1.0);  // x >= 0
  auto& blk = prob.add_block(1);              // -1 - x >= 0
  blk.add_constant(0, 0, -1.0);
  blk.add_coeff(x, 0, 0, -1.0);
  const SdpSolution sol = solve(prob);
  CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("objective on an unconstrained variable is unbounded") {
  SdpProblem prob;
  const int x = prob.add_variable();
  prob.add_block(1).add_constant(0, 0, 1.0);
  prob.add_objective(x, 1.0);
  const SdpSolution sol = solve(prob);
  CHECK(sol.status == SdpStatus::Unbounded);
}

TEST_CASE("round trip: optimal solves verify at 1e-6") {
  // Family bounded by construction: maximize t s.t. C - t I - sum y_i A_i >= 0
  // with traceless A_i, so t <= tr(C)/p along every feasible direction.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int rep = 0; rep < 8; ++rep) {
    const int p = 5, n = 3;
    SdpProblem prob;
    const int t = prob.add_variable();
    prob.add_variables(n);
    auto& blk = prob.add_block(p);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j <= i; ++j) C(i, j) = gauss(rng);
    C = (C * C.transpose()).eval();
    C.diagonal().array() += 1.0;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j <= i; ++j) blk.add_constant(i, j, C(i, j));
    for (int i = 0; i < p; ++i) blk.add_coeff(t, i, i, -1.0);
    for (int v = 0; v < n; ++v) {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = gauss(rng);
      A.diagonal().array() -= A.trace() / p;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j <= i; ++j) blk.add_coeff(1 + v, i, j, -A(i, j));
    }
    prob.add_objective(t, 1.0);

    const SdpSolution sol = solve(prob);
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(verify_solution(prob, sol.y, 1e-6).pass);

    // Cross-check against the naive barrier method started strictly inside.
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(1 + n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    y0[t] = es.eigenvalues().minCoeff() - 1.0;
    const SdpSolution ref = solve_barrier(prob, y0);
    CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(2e-4));
  }
}

TEST_CASE("problem dump lists one line per nonzero") {
  SdpProblem prob;
  const int x = prob.add_variable();
  auto& blk = prob.add_block(2);
  blk.add_coeff(x, 0, 0, 1.0);
  blk.add_constant(1, 0, 0.5);
  prob.add_equality({{{x, 1.0}}, 2.0});
  prob.add_objective(x, -1.0);
  std::ostringstream os;
  dump_problem(prob, os);
  const std::string text = os.str();
  CHECK(text.find("SDPDUMP v1") != std::string::npos);
  CHECK(text.find("coef 0 0 0 0 1") != std::string::npos);
  CHECK(text.find("const 0 1 0 0.5") != std::string::npos);
  CHECK(text.find("eq 0 0 1") != std::string::npos);
}
