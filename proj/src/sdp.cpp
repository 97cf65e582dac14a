#include "brs/sdp.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace brs {

void SdpBlock::add_constant(int r, int c, double v) {
  if (v == 0.0) return;
  if (r < c) std::swap(r, c);
  constant.push_back({r, c, v});
}

void SdpBlock::add_coeff(int var, int r, int c, double v) {
  if (v == 0.0) return;
  if (r < c) std::swap(r, c);
  if (!coeffs.empty() && coeffs.back().first == var) {
    coeffs.back().second.push_back({r, c, v});
    return;
  }
  for (auto& [w, trips] : coeffs) {
    if (w == var) {
      trips.push_back({r, c, v});
      return;
    }
  }
  coeffs.push_back({var, {{r, c, v}}});
}

Eigen::MatrixXd SdpBlock::evaluate(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(dim, dim);
  auto put = [&](const SymTriplet& t, double scale) {
    G(t.row, t.col) += scale * t.value;
    if (t.row != t.col) G(t.col, t.row) += scale * t.value;
  };
  for (const auto& t : constant) put(t, 1.0);
  for (const auto& [var, trips] : coeffs) {
    if (var < 0 || var >= y.size()) throw std::out_of_range("SdpBlock: variable out of range");
    for (const auto& t : trips) put(t, y[var]);
  }
  return G;
}

std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "optimal";
    case SdpStatus::Infeasible: return "infeasible";
    case SdpStatus::Unbounded: return "unbounded";
    case SdpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

VerifyReport verify_solution(const SdpProblem& prob, const Eigen::VectorXd& y, double tol) {
  if (y.size() != prob.num_vars)
    throw std::invalid_argument("verify_solution: y dimension mismatch");
  VerifyReport rep;
  rep.pass = true;
  for (const auto& blk : prob.blocks) {
    const Eigen::MatrixXd G = blk.evaluate(y);
    double lam;
    if (blk.dim == 0) {
      lam = 0.0;  // empty block is vacuously PSD
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
      lam = es.eigenvalues().minCoeff();
    }
    rep.block_min_eig.push_back(lam);
    if (lam < -tol) rep.pass = false;
  }
  for (const auto& row : prob.equalities) {
    double v = -row.rhs;
    for (const auto& [var, coeff] : row.terms) {
      if (var < 0 || var >= prob.num_vars)
        throw std::invalid_argument("verify_solution: equality variable out of range");
      v += coeff * y[var];
    }
    rep.max_equality_residual = std::max(rep.max_equality_residual, std::abs(v));
  }
  if (rep.max_equality_residual > tol) rep.pass = false;
  return rep;
}

SdpSolution solve_barrier(const SdpProblem& prob, const Eigen::VectorXd& y0,
                          const SolverOptions& opts) {
  if (prob.blocks.size() != 1 || !prob.equalities.empty())
    throw std::invalid_argument("solve_barrier: single block, no equalities only");
  if (prob.blocks[0].dim > 20)
    throw std::invalid_argument("solve_barrier: block too large for the naive method");
  const SdpBlock& blk = prob.blocks[0];
  const int n = prob.num_vars;

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (const auto& [var, coeff] : prob.objective) b[var] += coeff;

  std::vector<Eigen::MatrixXd> F(n, Eigen::MatrixXd::Zero(blk.dim, blk.dim));
  for (const auto& [var, trips] : blk.coeffs) {
    for (const auto& t : trips) {
      F[var](t.row, t.col) += t.value;
      if (t.row != t.col) F[var](t.col, t.row) += t.value;
    }
  }

  Eigen::VectorXd y = y0;
  {
    Eigen::LLT<Eigen::MatrixXd> llt(blk.evaluate(y));
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("solve_barrier: y0 is not strictly feasible");
  }

  SdpSolution sol;
  sol.iterations = 0;
  // Decrease the barrier weight; Newton with backtracking at each stage.
  for (double mu = 1.0; mu > 0.25 * opts.gap_tol / std::max(1, blk.dim); mu *= 0.2) {
    for (int newton = 0; newton < 50; ++newton) {
      ++sol.iterations;
      const Eigen::MatrixXd G = blk.evaluate(y);
      const Eigen::MatrixXd Ginv = G.inverse();
      Eigen::VectorXd grad(n);
      Eigen::MatrixXd hess(n, n);
      std::vector<Eigen::MatrixXd> GF(n);
      for (int i = 0; i < n; ++i) GF[i] = Ginv * F[i];
      for (int i = 0; i < n; ++i) {
        grad[i] = -b[i] / mu - GF[i].trace();
        for (int j = 0; j <= i; ++j) {
          hess(i, j) = hess(j, i) = (GF[i] * GF[j]).trace();
        }
      }
      Eigen::VectorXd step =
          (hess + 1e-12 * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(-grad);
      const double decrement = -grad.dot(step);
      if (decrement < 1e-12) break;
      double alpha = 1.0;
      const double f0 = -b.dot(y) / mu - std::log(G.determinant());
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd yt = y + alpha * step;
        Eigen::LLT<Eigen::MatrixXd> llt(blk.evaluate(yt));
        if (llt.info() != Eigen::Success) continue;
        double logdet = 0.0;
        for (int i = 0; i < blk.dim; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        const double ft = -b.dot(yt) / mu - logdet;
        if (ft <= f0 - 1e-4 * alpha * decrement) {
          y = yt;
          break;
        }
      }
    }
  }
  sol.y = y;
  sol.objective = b.dot(y);
  sol.status = SdpStatus::Optimal;
  const VerifyReport rep = verify_solution(prob, y, opts.feas_tol);
  sol.block_min_eig = rep.block_min_eig;
  return sol;
}

// Dump format ("SDPDUMP v1"): header lines then one line per nonzero.
//   vars <n>
//   obj <var> <value>
//   block <k> <dim>
//   const <k> <row> <col> <value>
//   coef <k> <var> <row> <col> <value>
//   eq <row> <var> <value>
//   rhs <row> <value>
void dump_problem(const SdpProblem& prob, std::ostream& os) {
  os << "SDPDUMP v1\n";
  os << "vars " << prob.num_vars << "\n";
  for (const auto& [var, coeff] : prob.objective) os << "obj " << var << " " << coeff << "\n";
  for (size_t k = 0; k < prob.blocks.size(); ++k) {
    const auto& blk = prob.blocks[k];
    os << "block " << k << " " << blk.dim << "\n";
    for (const auto& t : blk.constant)
      os << "const " << k << " " << t.row << " " << t.col << " " << t.value << "\n";
    for (const auto& [var, trips] : blk.coeffs)
      for (const auto& t : trips)
        os << "coef " << k << " " << var << " " << t.row << " " << t.col << " " << t.value
           << "\n";
  }
  for (size_t r = 0; r < prob.equalities.size(); ++r) {
    for (const auto& [var, coeff] : prob.equalities[r].terms)
      os << "eq " << r << " " << var << " " << coeff << "\n";
    os << "rhs " << r << " " << prob.equalities[r].rhs << "\n";
  }
}

}  // namespace brs
