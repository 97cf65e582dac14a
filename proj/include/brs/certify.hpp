#ifndef BRS_CERTIFY_HPP
#define BRS_CERTIFY_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "brs/sos.hpp"
#include "brs/system.hpp"

namespace brs {

struct SynthesisConfig {
  int deg_V = 4;
  int deg_k = -1;       // -1: deg_V - 1
  int deg_s1 = -1;      // -1: deg_V rounded up to even
  int deg_s2 = -1;      // -1: deg_V rounded up to even
  int deg_s3 = -1;      // -1: max(0, deg_V - deg_px) rounded up to even
  int deg_s4 = 2;
  int deg_s5 = 2;
  int deg_s6 = 2;
  int deg_s0 = 2;
  int deg_lambda = 2;   // sector multiplier degree
  double epsilon_s3 = 1e-6;
  double kyp_epsilon = 1e-9;

  int n_iter = 20;
  double gamma_rel_tol = 1e-4;   // stop after two consecutive small improvements
  double bisect_rel_tol = 2e-3;  // gamma bisection resolution
  // Optional feasibility-margin objective (maximize delta with
  // expr - delta * sum of squared basis monomials). The dissipation is tight
  // at the equilibrium, which pins the optimal delta to zero and makes the
  // margin SDP degenerate, so the default solves the pure feasibility
  // program instead; its central point plays the "maximize feasibility"
  // role.
  bool use_margin = false;
  double margin_cap = 1.0;
  double margin_accept = -1e-5;

  Eigen::MatrixXd lqr_Q, lqr_R;  // empty: identity
  Eigen::VectorXd x_eq;          // over [x_G, x_psi, x~]; empty: origin
  Eigen::VectorXd u_eq;          // direct channels; empty: zero
  double init_level = 1.0;       // gamma_0 used by the V0 scaling
  int init_samples = 4096;

  SolverOptions solver = [] {
    SolverOptions s;
    // Working tolerance of the alternation's own solves; the certificate is
    // still audited at 1e-6 by reverify and the validation suite.
    s.feas_tol = 1e-6;
    s.gap_tol = 1e-6;
    return s;
  }();
  bool verbose = false;
};

struct IterationRecord {
  int index = 0;
  double gamma = 0.0;
  int gamma_probes = 0;
  bool v_step_ok = false;
  double margin = 0.0;
  double wall_sec = 0.0;
};

/// Everything needed to re-verify and exploit the inner-approximation:
/// sublevel set {V(0, x_G, 0, 0) <= gamma} of the storage function, the
/// controller that certifies it, the multiplier data and the S-procedure
/// certificates of the final program.
struct Certificate {
  std::vector<std::string> xg_names, xpsi_names, xt_names, u_direct_names;
  double horizon = 0.0, R = 0.0, gamma = 0.0;
  Polynomial target;
  bool dynamic_controller = false;
  Hardness hardness = Hardness::Hard;
  MKind mkind = MKind::Sector;
  double sigma = 0.0, alpha = 0.0, beta = 0.0;

  Polynomial V;                     // over (t, x_G, x_psi, x~)
  std::vector<Polynomial> k_direct; // per direct channel, over (t, x_G)
  std::vector<Polynomial> k_tilde;  // per x~ row, over (t, x_G, x~)
  Polynomial lambda;                // sector multiplier polynomial
  Eigen::MatrixXd M;                // numeric M (sector: the base matrix)
  Eigen::MatrixXd Y22;              // soft bound matrix (n_psi x n_psi)
  Eigen::MatrixXd Y1;               // KYP certificate for the DG M11 positivity

  Polynomial s1, s2, s3, s0;
  std::vector<Polynomial> s4, s5, s6;

  std::vector<IterationRecord> history;
  double total_wall_sec = 0.0;

  int n_G() const { return static_cast<int>(xg_names.size()); }
  int n_psi() const { return static_cast<int>(xpsi_names.size()); }
  int n_xt() const { return static_cast<int>(xt_names.size()); }

  /// V(0, x_G, 0, 0) evaluated on the certified slice.
  double V0_slice(const Eigen::VectorXd& xg) const;
};

/// LQR-seeded initial storage function: Riccati gain for the linearization,
/// Lyapunov equation for the closed loop, scaled so the init_level + R^2
/// sublevel set projects inside the target under a boundary sampling check.
Polynomial init_V0(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg);

struct CertifyStatus {
  bool ok = false;
  std::string message;
};

/// Algorithms 1 (hard) / 2 (soft): alternate the gamma-step (bisection over
/// feasibility programs with V [and M, Y22 for soft] frozen) and the V-step
/// (feasibility-margin maximization with the level-set growth constraint).
/// Throws std::runtime_error on iteration-1 infeasibility naming the first
/// infeasible constraint family.
Certificate iterate(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg);

struct GammaStepResult {
  bool ok = false;
  double gamma = 0.0;
  int probes = 0;
  Certificate snapshot;
};

/// One gamma-step against a fixed storage function (and fixed M, Y22 for
/// soft specs): sup gamma by bisection over feasibility programs.
GammaStepResult gamma_step(const ExtendedSystem& E, const IqcSpec& iqc,
                           const SynthesisConfig& cfg, const Polynomial& V_fixed,
                           const Eigen::MatrixXd& M_fixed = {},
                           const Eigen::MatrixXd& Y22_fixed = {});

struct VStepResult {
  bool ok = false;
  double margin = 0.0;
  Certificate snapshot;
};

/// One V-step at the given gamma with (k, s2, s5) frozen from `from`.
VStepResult v_step(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg,
                   const Certificate& from, double gamma);

/// Per-family feasibility report of the gamma-step program at a fixed V and
/// gamma (each constraint family solved in isolation); diagnostic helper.
std::string diagnose_feasibility(const ExtendedSystem& E, const IqcSpec& iqc,
                                 const SynthesisConfig& cfg, const Polynomial& V_fixed,
                                 double gamma);

/// Re-verify a certificate against the system it was computed for: rebuilds
/// every SOS constraint of the final program at the certified values and
/// audits each with check_sos at `tol`, plus the KYP inequality for soft
/// certificates. Returns ok = false with the first failing family otherwise.
CertifyStatus reverify(const ExtendedSystem& E, const IqcSpec& iqc, const Certificate& cert,
                       double tol = 1e-6);

}  // namespace brs

#endif  // BRS_CERTIFY_HPP
