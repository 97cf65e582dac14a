#ifndef BRS_LQR_HPP
#define BRS_LQR_HPP

#include <Eigen/Dense>

namespace brs {

/// Stabilizing solution of A'P + PA - P B R^{-1} B' P + Q = 0 via the matrix
/// sign iteration with determinant scaling. Throws on non-convergence.
Eigen::MatrixXd solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// Solution of A'Y + YA + Q = 0 (A Hurwitz) by the vectorized linear system.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

}  // namespace brs

#endif  // BRS_LQR_HPP
