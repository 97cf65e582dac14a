#ifndef BRS_SDP_HPP
#define BRS_SDP_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

namespace brs {

/// One nonzero of a symmetric matrix, stored on the lower triangle (r >= c).
struct SymTriplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Affine symmetric-matrix-valued function of the decision vector y:
///   G(y) = constant + sum_i y_i * coeff_i,
/// constrained positive semidefinite. Triplets address the lower triangle;
/// the matrix is symmetric by construction.
struct SdpBlock {
  int dim = 0;
  std::vector<SymTriplet> constant;
  // (variable index, its symmetric coefficient matrix as triplets)
  std::vector<std::pair<int, std::vector<SymTriplet>>> coeffs;

  void add_constant(int r, int c, double v);
  void add_coeff(int var, int r, int c, double v);
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& y) const;
};

/// Sparse linear equality sum_i coeff_i * y_i = rhs.
struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;
};

/// Solver-agnostic semidefinite program in LMI form:
///   maximize  objective . y
///   s.t.      G_k(y) >= 0 for every block k,
///             A y = c (the equality rows).
struct SdpProblem {
  int num_vars = 0;
  std::vector<SdpBlock> blocks;
  std::vector<LinearRow> equalities;
  std::vector<std::pair<int, double>> objective;  // maximized

  int add_variable() { return num_vars++; }
  int add_variables(int n) {
    const int first = num_vars;
    num_vars += n;
    return first;
  }
  SdpBlock& add_block(int dim) {
    blocks.push_back(SdpBlock{dim, {}, {}});
    return blocks.back();
  }
  void add_equality(LinearRow row) { equalities.push_back(std::move(row)); }
  void add_objective(int var, double coeff) { objective.emplace_back(var, coeff); }
};

enum class SdpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SdpStatus s);

struct SolverOptions {
  double feas_tol = 1e-7;
  double gap_tol = 1e-7;
  int max_iterations = 200;
  bool verbose = false;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  Eigen::VectorXd y;
  double objective = 0.0;
  std::vector<double> block_min_eig;  // at the returned y
  int iterations = 0;
  double wall_time_sec = 0.0;
  std::string message;
};

struct VerifyReport {
  std::vector<double> block_min_eig;
  double max_equality_residual = 0.0;
  bool pass = false;
};

/// Interior-point solve (primal-dual path following with Nesterov-Todd
/// scaling). Reported Optimal always satisfies the verify_solution invariant
/// at opts.feas_tol; anything the solver cannot certify comes back as
/// Infeasible / Unbounded (with a ray) or NumericalFailure, never as a fake
/// Optimal.
SdpSolution solve(const SdpProblem& prob, const SolverOptions& opts = {});

/// Independent recheck of a candidate point: minimum eigenvalue of every
/// block and the worst equality residual, compared against tol.
VerifyReport verify_solution(const SdpProblem& prob, const Eigen::VectorXd& y, double tol);

/// Naive log-det barrier method (Newton + backtracking) for small,
/// single-block, equality-free problems. Requires a strictly feasible start;
/// exists to cross-check the interior-point path in the unit tests.
SdpSolution solve_barrier(const SdpProblem& prob, const Eigen::VectorXd& y0,
                          const SolverOptions& opts = {});

/// Sparse text dump, one line per nonzero; see the format comment in sdp.cpp.
void dump_problem(const SdpProblem& prob, std::ostream& os);

}  // namespace brs

#endif  // BRS_SDP_HPP
