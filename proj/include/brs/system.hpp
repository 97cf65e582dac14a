#ifndef BRS_SYSTEM_HPP
#define BRS_SYSTEM_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "brs/lti.hpp"
#include "brs/polynomial.hpp"

namespace brs {

/// Uncertain polynomial plant
///   x_G' = f(x_G, w, d) + g(x_G, w, d) u,   v = h(x_G, w, d [, u]),
/// with the control polytope P u <= b, disturbance energy bound R, target
/// set {p_x <= 0} and horizon T. h may reference control names only on
/// actuator-uncertain channels (resolved by augment_actuator).
struct NominalSystem {
  std::vector<std::string> state_names;    // x_G
  std::vector<std::string> control_names;  // u
  std::vector<std::string> dist_names;     // d
  std::vector<std::string> w_names;        // perturbation outputs
  PolynomialMatrix f;                      // n_G x 1
  PolynomialMatrix g;                      // n_G x n_u
  PolynomialMatrix h;                      // n_v x 1
  Eigen::MatrixXd P;
  Eigen::VectorXd b;
  double R = 0.0;
  Polynomial target;  // p_x over state_names
  double horizon = 1.0;

  int n_G() const { return static_cast<int>(state_names.size()); }
  int n_u() const { return static_cast<int>(control_names.size()); }
  int n_d() const { return static_cast<int>(dist_names.size()); }
  int n_w() const { return static_cast<int>(w_names.size()); }
  int n_v() const { return h.rows(); }
};

/// Interconnection of the plant with the IQC filter (and the auxiliary
/// controller state x~ under actuator uncertainty):
///   x' = f_ext(x, x~, w, d) + g_ext(x, x~, w, d) u_direct,    x = [x_G; x_psi]
///   z  = H(x, x~, w, d),
/// where the x~ rows (x~' = ktilde) are appended by the certification layer,
/// which owns the decision polynomial ktilde.
struct ExtendedSystem {
  VarSetPtr vars;  // [x_G..., x_psi..., x_t..., u_direct..., w..., d...]
  std::vector<std::string> xg_names, xpsi_names, xt_names;
  std::vector<std::string> u_direct_names, w_names, d_names;
  PolynomialMatrix f_ext;  // (n_G + n_psi) x 1
  PolynomialMatrix g_ext;  // (n_G + n_psi) x n_u_direct
  PolynomialMatrix H;      // n_z x 1
  PolynomialMatrix h_sub;  // n_v x 1: the perturbation input map (u -> x~ applied)
  bool actuator_uncertain = false;
  std::vector<int> perturbed_channels;  // original control indices, in x~ order
  std::vector<int> direct_channels;     // original control indices kept direct
  Eigen::MatrixXd P;  // over the original control vector (perturbed + direct)
  Eigen::VectorXd b;
  double R = 0.0;
  Polynomial target;
  double horizon = 1.0;

  int n_G() const { return static_cast<int>(xg_names.size()); }
  int n_psi() const { return static_cast<int>(xpsi_names.size()); }
  int n_xt() const { return static_cast<int>(xt_names.size()); }
  int n_x() const { return n_G() + n_psi(); }
  int n_u_direct() const { return static_cast<int>(u_direct_names.size()); }
  int n_w() const { return static_cast<int>(w_names.size()); }
  int n_d() const { return static_cast<int>(d_names.size()); }
  int n_z() const { return H.rows(); }

  /// The original-control row P_i u rewritten over (k_direct, x~): pairs of
  /// (original index, coefficient) split by role.
  struct PolytopeRow {
    std::vector<std::pair<int, double>> direct;     // index into direct_channels
    std::vector<std::pair<int, double>> perturbed;  // index into xt order
    double bound;
  };
  std::vector<PolytopeRow> polytope_rows() const;
};

/// Plant + filter, no actuator uncertainty: h must not reference controls.
ExtendedSystem extend(const NominalSystem& G, const IqcSpec& iqc);

/// Actuator-uncertain interconnection: the listed control channels are
/// replaced by auxiliary states x~ (u_ch = x~_ch, x~(0) = 0), both in the
/// plant dynamics and inside h; remaining channels stay direct decisions.
ExtendedSystem augment_actuator(const NominalSystem& G, const IqcSpec& iqc,
                                const std::vector<int>& channels);

/// Newton (Gauss-Newton least-squares) search for f(x,0,0) + g(x,0,0) u = 0,
/// together with optional trim equalities over (x, u) (default: u free).
/// Throws after 100 iterations without reaching residual 1e-10.
std::pair<Eigen::VectorXd, Eigen::VectorXd> equilibrium(
    const NominalSystem& G, const Eigen::VectorXd& x_guess, const Eigen::VectorXd& u_guess,
    const std::vector<Polynomial>& trims = {});

/// Jacobians of the extended dynamics at an equilibrium with w = 0, d = 0.
/// States are ordered [x_G, x_psi, x~]; inputs are the direct controls
/// followed by one virtual rate input per x~ row (x~' = ktilde).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(const ExtendedSystem& E,
                                                      const Eigen::VectorXd& x_eq,
                                                      const Eigen::VectorXd& u_eq);

}  // namespace brs

#endif  // BRS_SYSTEM_HPP
