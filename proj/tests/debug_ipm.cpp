#include <iostream>
#include <random>

#include "brs/sdp.hpp"

using namespace brs;

int main() {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int p = 4, n = 3;
  SdpProblem prob;
  prob.add_variables(n);
  auto& blk = prob.add_block(p);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) C(i, j) = gauss(rng);
  C = (C * C.transpose()).eval();
  C.diagonal().array() += 1.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) blk.add_constant(i, j, C(i, j));
  for (int v = 0; v < n; ++v) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j <= i; ++j) F(i, j) = 0.3 * gauss(rng);
    F = (F * F.transpose()).eval();
    F.diagonal().array() += 0.5;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j <= i; ++j) blk.add_coeff(v, i, j, -F(i, j));
    prob.add_objective(v, 0.5 + std::abs(gauss(rng)));
  }
  SolverOptions opts;
  opts.verbose = true;
  const SdpSolution sol = solve(prob, opts);
  std::cout << "status=" << to_string(sol.status) << " obj=" << sol.objective
            << " iters=" << sol.iterations << " msg=" << sol.message << "\n";
  if (sol.y.size()) std::cout << "y=" << sol.y.transpose() << "\n";

  const SdpSolution ref = solve_barrier(prob, Eigen::VectorXd::Zero(n));
  std::cout << "barrier obj=" << ref.objective << " y=" << ref.y.transpose() << "\n";
  return 0;
}
