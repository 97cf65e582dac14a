#include "brs/lti.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace brs {

bool LinearSystem::is_hurwitz() const {
  if (n_psi() == 0) return true;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  return es.eigenvalues().real().maxCoeff() < 0.0;
}

Eigen::Matrix2d MSet::sector_base() const {
  Eigen::Matrix2d S;
  S << -2.0 * alpha * beta, alpha + beta, alpha + beta, -2.0;
  return S;
}

LinearSystem make_psi_column(int d, double m) {
  if (d < 0) throw std::invalid_argument("make_psi_column: d must be nonnegative");
  if (m <= 0.0) throw std::invalid_argument("make_psi_column: m must be positive");
  LinearSystem sys;
  sys.A = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    sys.A(i, i) = -m;
    if (i > 0) sys.A(i, i - 1) = 1.0;
  }
  sys.B1 = Eigen::MatrixXd::Zero(d, 1);
  if (d > 0) sys.B1(0, 0) = 1.0;
  sys.B2 = Eigen::MatrixXd::Zero(d, 0);
  sys.C = Eigen::MatrixXd::Zero(d + 1, d);
  for (int i = 0; i < d; ++i) sys.C(i + 1, i) = 1.0;
  sys.D1 = Eigen::MatrixXd::Zero(d + 1, 1);
  sys.D1(0, 0) = 1.0;
  sys.D2 = Eigen::MatrixXd::Zero(d + 1, 0);
  return sys;
}

namespace {

// Psi = diag(psi11, psi11) acting on (v, w), z = [psi11 v; psi11 w].
LinearSystem stack_diag(const LinearSystem& col) {
  const int d = col.n_psi();
  const int r = d + 1;
  LinearSystem sys;
  sys.A = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  sys.A.topLeftCorner(d, d) = col.A;
  sys.A.bottomRightCorner(d, d) = col.A;
  sys.B1 = Eigen::MatrixXd::Zero(2 * d, 1);
  sys.B2 = Eigen::MatrixXd::Zero(2 * d, 1);
  if (d > 0) {
    sys.B1.topRows(d) = col.B1;
    sys.B2.bottomRows(d) = col.B1;
  }
  sys.C = Eigen::MatrixXd::Zero(2 * r, 2 * d);
  sys.C.topLeftCorner(r, d) = col.C;
  sys.C.bottomRightCorner(r, d) = col.C;
  sys.D1 = Eigen::MatrixXd::Zero(2 * r, 1);
  sys.D2 = Eigen::MatrixXd::Zero(2 * r, 1);
  sys.D1.topRows(r) = col.D1;
  sys.D2.bottomRows(r) = col.D1;
  return sys;
}

LinearSystem identity_filter(int n_v, int n_w) {
  LinearSystem sys;
  sys.A = Eigen::MatrixXd::Zero(0, 0);
  sys.B1 = Eigen::MatrixXd::Zero(0, n_v);
  sys.B2 = Eigen::MatrixXd::Zero(0, n_w);
  sys.C = Eigen::MatrixXd::Zero(n_v + n_w, 0);
  sys.D1 = Eigen::MatrixXd::Zero(n_v + n_w, n_v);
  sys.D1.topRows(n_v).setIdentity();
  sys.D2 = Eigen::MatrixXd::Zero(n_v + n_w, n_w);
  sys.D2.bottomRows(n_w).setIdentity();
  return sys;
}

}  // namespace

IqcSpec build_iqc_d(double sigma, int d, double m) {
  if (sigma <= 0.0) throw std::invalid_argument("build_iqc_d: sigma must be positive");
  IqcSpec spec;
  spec.psi11 = make_psi_column(d, m);
  spec.filter = stack_diag(spec.psi11);
  spec.mset = MSet{MKind::D, sigma, 0.0, 0.0, d + 1, 0, 1, 1};
  spec.hardness = Hardness::Hard;
  return spec;
}

IqcSpec build_iqc_dg(double sigma, int d, double m) {
  IqcSpec spec = build_iqc_d(sigma, d, m);
  spec.mset.kind = MKind::DG;
  spec.hardness = Hardness::Soft;
  return spec;
}

IqcSpec build_iqc_nlgain(double sigma, int n_v, int n_w) {
  if (sigma <= 0.0) throw std::invalid_argument("build_iqc_nlgain: sigma must be positive");
  IqcSpec spec;
  spec.filter = identity_filter(n_v, n_w);
  spec.psi11 = identity_filter(1, 0);
  spec.mset = MSet{MKind::NLgain, sigma, 0.0, 0.0, 0, 0, n_v, n_w};
  spec.hardness = Hardness::Hard;
  return spec;
}

IqcSpec build_iqc_sector(double alpha, double beta, int lambda_degree) {
  if (alpha >= beta) throw std::invalid_argument("build_iqc_sector: requires alpha < beta");
  IqcSpec spec;
  spec.filter = identity_filter(1, 1);
  spec.psi11 = identity_filter(1, 0);
  spec.mset = MSet{MKind::Sector, 0.0, alpha, beta, 0, lambda_degree, 1, 1};
  spec.hardness = Hardness::Hard;
  return spec;
}

IqcSpec build_iqc_none() {
  IqcSpec spec;
  spec.filter = identity_filter(0, 0);
  spec.psi11 = identity_filter(0, 0);
  spec.mset = MSet{MKind::None, 0.0, 0.0, 0.0, 0, 0, 0, 0};
  spec.hardness = Hardness::Hard;
  return spec;
}

Eigen::MatrixXd kyp_matrix(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& A,
                           const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                           const Eigen::MatrixXd& D, const Eigen::MatrixXd& M) {
  const int n = static_cast<int>(A.rows());
  const int nw = static_cast<int>(B.cols());
  if (Y.rows() != n || Y.cols() != n || B.rows() != n || C.cols() != n || D.cols() != nw ||
      M.rows() != C.rows() || M.cols() != C.rows())
    throw std::invalid_argument("kyp_matrix: dimension mismatch");
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + nw, n + nw);
  K.topLeftCorner(n, n) = A.transpose() * Y + Y * A;
  K.topRightCorner(n, nw) = Y * B;
  K.bottomLeftCorner(nw, n) = B.transpose() * Y;
  Eigen::MatrixXd CD(C.rows(), n + nw);
  CD << C, D;
  K += CD.transpose() * M * CD;
  return 0.5 * (K + K.transpose());
}

Eigen::MatrixXd kyp_matrix(const Eigen::MatrixXd& Y, const LinearSystem& sys,
                           const Eigen::MatrixXd& M) {
  return kyp_matrix(Y, sys.A, sys.B2, sys.C, sys.D2, M);
}

Eigen::MatrixXcd freq_response(const LinearSystem& sys, double omega) {
  const int n = sys.n_psi();
  Eigen::MatrixXcd B(n, sys.n_v() + sys.n_w());
  Eigen::MatrixXcd D(sys.n_z(), sys.n_v() + sys.n_w());
  B << sys.B1.cast<std::complex<double>>(), sys.B2.cast<std::complex<double>>();
  D << sys.D1.cast<std::complex<double>>(), sys.D2.cast<std::complex<double>>();
  if (n == 0) return D;
  const std::complex<double> jw(0.0, omega);
  Eigen::MatrixXcd resolvent =
      (jw * Eigen::MatrixXcd::Identity(n, n) - sys.A.cast<std::complex<double>>())
          .partialPivLu()
          .solve(B);
  return sys.C.cast<std::complex<double>>() * resolvent + D;
}

Eigen::MatrixXcd pi22_at(const LinearSystem& sys, const Eigen::MatrixXd& M, double omega) {
  const Eigen::MatrixXcd psi = freq_response(sys, omega);
  const Eigen::MatrixXcd psi2 = psi.rightCols(sys.n_w());
  return psi2.adjoint() * M.cast<std::complex<double>>() * psi2;
}

std::optional<Eigen::MatrixXd> kyp_find_y22(const IqcSpec& spec, const Eigen::MatrixXd& M,
                                            const SolverOptions& opts) {
  if (spec.hardness != Hardness::Soft)
    throw std::invalid_argument("kyp_find_y22: spec must be a soft IQC");
  const LinearSystem& sys = spec.filter;
  const int n = sys.n_psi();
  const int nw = sys.n_w();

  // Frequency screen: Pi22(jw) < 0 is necessary (Lemma-level precondition);
  // the LMI below is the actual certificate.
  {
    std::vector<double> omegas{0.0};
    for (int i = 0; i < 50; ++i) omegas.push_back(std::pow(10.0, -3.0 + 6.0 * i / 49.0));
    for (double w : omegas) {
      const Eigen::MatrixXcd p22 = pi22_at(sys, M, w);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(p22, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().maxCoeff() >= 0.0) return std::nullopt;
    }
  }

  if (n == 0) {
    // Condition reduces to D2' M D2 < 0 (already screened); Y22 is empty.
    return Eigen::MatrixXd::Zero(0, 0);
  }

  // maximize t s.t. -KYP(Y22) - t I >= 0; the (w,w) corner bounds t.
  SdpProblem prob;
  const int t = prob.add_variable();
  const int y0 = prob.add_variables(n * (n + 1) / 2);
  SdpBlock& blk = prob.add_block(n + nw);

  const Eigen::MatrixXd CD2 = [&] {
    Eigen::MatrixXd CD(sys.C.rows(), n + nw);
    CD << sys.C, sys.D2;
    return (-(CD.transpose() * M * CD)).eval();
  }();
  for (int i = 0; i < n + nw; ++i)
    for (int j = 0; j <= i; ++j) blk.add_constant(i, j, CD2(i, j));
  for (int i = 0; i < n + nw; ++i) blk.add_coeff(t, i, i, -1.0);

  // -(A'Y + YA) and -(YB) entries per Y22 coordinate.
  int var = y0;
  for (int q = 0; q < n; ++q) {
    for (int p = q; p < n; ++p, ++var) {
      Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, n);
      Y(p, q) = Y(q, p) = 1.0;
      const Eigen::MatrixXd K = kyp_matrix(Y, sys.A, sys.B2, sys.C, sys.D2,
                                           Eigen::MatrixXd::Zero(sys.n_z(), sys.n_z()));
      for (int i = 0; i < n + nw; ++i)
        for (int j = 0; j <= i; ++j) blk.add_coeff(var, i, j, -K(i, j));
    }
  }
  prob.add_objective(t, 1.0);

  const SdpSolution sol = solve(prob, opts);
  if (sol.status == SdpStatus::Infeasible) return std::nullopt;
  if (sol.status != SdpStatus::Optimal)
    throw std::runtime_error("kyp_find_y22: solver failure (" + to_string(sol.status) + ")");
  if (sol.y[t] < 1e-9) return std::nullopt;

  Eigen::MatrixXd Y22(n, n);
  var = y0;
  for (int q = 0; q < n; ++q)
    for (int p = q; p < n; ++p, ++var) Y22(p, q) = Y22(q, p) = sol.y[var];
  return Y22;
}

}  // namespace brs
