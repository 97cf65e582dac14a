#include <cmath>
#include <stdexcept>

#include "brs/lqr.hpp"

namespace brs {

Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::Index n = B.rows();
  if (A.rows() != n || A.cols() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols())
    throw std::invalid_argument("solve_care: dimension mismatch");

  Eigen::LLT<Eigen::MatrixXd> R_chol(R);
  if (R_chol.info() != Eigen::Success)
    throw std::invalid_argument("solve_care: R must be positive definite");

  Eigen::MatrixXd H(2 * n, 2 * n);
  H << A, B * R_chol.solve(B.transpose()), Q, -A.transpose();

  // Matrix sign iteration with determinant scaling.
  Eigen::MatrixXd Z = H;
  const double p = static_cast<double>(2 * n);
  for (int iter = 0; iter < 100; ++iter) {
    const double ck = std::pow(std::abs(Z.determinant()), -1.0 / p);
    Z *= ck;
    const Eigen::MatrixXd Znew = Z - 0.5 * (Z - Z.inverse());
    const double rel = (Znew - Z).norm() / std::max(1.0, Z.norm());
    Z = Znew;
    if (rel < 1e-13) break;
    if (iter == 99) throw std::runtime_error("solve_care: sign iteration did not converge");
  }

  const Eigen::MatrixXd W11 = Z.block(0, 0, n, n);
  const Eigen::MatrixXd W12 = Z.block(0, n, n, n);
  const Eigen::MatrixXd W21 = Z.block(n, 0, n, n);
  const Eigen::MatrixXd W22 = Z.block(n, n, n, n);
  Eigen::MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  lhs << W12, W22 + eye;
  rhs << W11 + eye, W21;
  Eigen::MatrixXd P =
      Eigen::JacobiSVD<Eigen::MatrixXd>(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV)
          .solve(rhs);
  P = 0.5 * (P + P.transpose()).eval();

  const double residual =
      (A.transpose() * P + P * A - P * B * R_chol.solve(B.transpose()) * P + Q).norm();
  if (!(residual <= 1e-6 * std::max(1.0, P.norm())))
    throw std::runtime_error("solve_care: residual check failed");
  return P;
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  // vec(A'Y + YA) = (I (x) A' + A' (x) I) vec(Y) = -vec(Q)
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
  const Eigen::MatrixXd At = A.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    K.block(i * n, i * n, n, n) += At;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) K(i * n + k, j * n + k) += At(i, j);
  Eigen::VectorXd q(n * n);
  for (Eigen::Index j = 0; j < n; ++j) q.segment(j * n, n) = -Q.col(j);
  const Eigen::VectorXd y = K.partialPivLu().solve(q);
  Eigen::MatrixXd Y(n, n);
  for (Eigen::Index j = 0; j < n; ++j) Y.col(j) = y.segment(j * n, n);
  return 0.5 * (Y + Y.transpose()).eval();
}

}  // namespace brs
