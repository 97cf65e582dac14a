#ifndef BRS_LTI_HPP
#define BRS_LTI_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "brs/sdp.hpp"

namespace brs {

/// State-space filter driven by the perturbation input v and output w:
///   x_psi' = A x_psi + B1 v + B2 w,   z = C x_psi + D1 v + D2 w,
/// with zero initial condition. A must be Hurwitz.
struct LinearSystem {
  Eigen::MatrixXd A, B1, B2, C, D1, D2;

  int n_psi() const { return static_cast<int>(A.rows()); }
  int n_v() const { return static_cast<int>(D1.cols()); }
  int n_w() const { return static_cast<int>(D2.cols()); }
  int n_z() const { return static_cast<int>(C.rows() > 0 ? C.rows() : D1.rows()); }

  bool is_hurwitz() const;
};

enum class MKind { D, NLgain, Sector, DG, None };
enum class Hardness { Hard, Soft };

/// Parametrized constraint set for the IQC matrix M. The layout of decision
/// handles is realized by the certification program builder; this struct
/// carries the structural data.
struct MSet {
  MKind kind;
  double sigma = 0.0;       // D / NLgain / DG norm bound
  double alpha = 0.0;       // Sector lower slope
  double beta = 0.0;        // Sector upper slope
  int m11_dim = 0;          // D / DG: M11 in S^{m11_dim}
  int lambda_degree = 2;    // Sector: polynomial degree of the lambda multiplier
  int n_v = 1, n_w = 1;     // channel dimensions

  /// Constant sector matrix [[-2ab, a+b], [a+b, -2]].
  Eigen::Matrix2d sector_base() const;
};

struct IqcSpec {
  LinearSystem filter;
  MSet mset;
  Hardness hardness = Hardness::Hard;
  /// Scalar filter column psi11 (D / DG kinds); used by the KYP positivity
  /// side constraint on M11.
  LinearSystem psi11;
};

/// State-space realization of the column [1, 1/(s+m), ..., 1/(s+m)^d]^T as a
/// Jordan chain of d states at -m.
LinearSystem make_psi_column(int d, double m);

/// Hard IQC for norm-bounded LTI uncertainty (D scaling over diag(psi11, psi11)).
IqcSpec build_iqc_d(double sigma, int d, double m);
/// Soft IQC for real constant parametric uncertainty (DG multiplier).
IqcSpec build_iqc_dg(double sigma, int d, double m);
/// Hard IQC for norm-bounded nonlinear/time-varying uncertainty (psi = I).
IqcSpec build_iqc_nlgain(double sigma, int n_v = 1, int n_w = 1);
/// Hard sector IQC with a polynomial lambda multiplier (psi = I2).
IqcSpec build_iqc_sector(double alpha, double beta, int lambda_degree = 2);
/// Degenerate spec for perturbation-free problems (n_v = n_w = 0, z empty).
IqcSpec build_iqc_none();

/// KYP(Y, A, B, C, D, M) = [[A'Y + YA, YB], [B'Y, 0]] + [C D]' M [C D].
Eigen::MatrixXd kyp_matrix(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& A,
                           const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                           const Eigen::MatrixXd& D, const Eigen::MatrixXd& M);
/// Convenience overload on the (A, B2, C, D2) channel used by the soft-IQC
/// finite-horizon bound.
Eigen::MatrixXd kyp_matrix(const Eigen::MatrixXd& Y, const LinearSystem& sys,
                           const Eigen::MatrixXd& M);

/// Find Y22 with KYP(Y22, A, B2, C, D2, M) < 0 (max eigenvalue <= -1e-9) via
/// an SDP feasibility problem, for a fixed numeric M. Returns std::nullopt
/// when the Pi22(jw) < 0 precondition fails or the LMI is infeasible.
/// Throws on solver failure (distinct from infeasibility).
std::optional<Eigen::MatrixXd> kyp_find_y22(const IqcSpec& spec, const Eigen::MatrixXd& M,
                                            const SolverOptions& opts = {});

/// C (jw I - A)^{-1} [B1 B2] + [D1 D2].
Eigen::MatrixXcd freq_response(const LinearSystem& sys, double omega);

/// Upper-left/lower-right partition helper: Pi(jw) = Psi(jw)^* M Psi(jw),
/// returns the w-channel block Pi22(jw).
Eigen::MatrixXcd pi22_at(const LinearSystem& sys, const Eigen::MatrixXd& M, double omega);

}  // namespace brs

#endif  // BRS_LTI_HPP
