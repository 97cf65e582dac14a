#ifndef BRS_VALIDATE_HPP
#define BRS_VALIDATE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "brs/certify.hpp"
#include "brs/system.hpp"

namespace brs {

/// Deterministic seed derivation: one root seed, one stream per purpose.
/// stream = splitmix64(root ^ fnv1a(purpose) ^ index).
std::uint64_t derive_seed(std::uint64_t root, const std::string& purpose, std::uint64_t index);

enum class PerturbKind { SectorNl, ConstantDelta, LtiNormBound, NlGain, None };

/// One concrete realization of the perturbation, provably inside its
/// declared class:
///   SectorNl:      w = (alpha + (beta - alpha) sin^2(rho v + phi)) v
///   ConstantDelta: w = delta v with |delta| <= sigma
///   LtiNormBound:  w = sigma g (w0 - s)/(w0 + s) v with |g| <= 1 (all-pass)
///   NlGain:        w = sigma g sin(omega t + phase) v with |g| <= 1
struct PerturbationSample {
  PerturbKind kind = PerturbKind::None;
  double alpha = 0.0, beta = 0.0, rho = 0.0, phi = 0.0;
  double delta = 0.0, sigma = 0.0;
  double gain = 0.0, w0 = 1.0;
  double omega = 0.0, phase = 0.0;

  bool check_class() const;
  std::string describe() const;
  bool has_state() const { return kind == PerturbKind::LtiNormBound; }
};

/// Admissible realization kinds for a certificate's multiplier class.
std::vector<PerturbKind> admissible_kinds(MKind mkind);

PerturbationSample draw_perturbation(MKind mkind, const MSet& mset, std::uint64_t seed);

/// Piecewise-constant disturbance on `segments` equal pieces of [0, T] with
/// ||d||_{2,[0,T]}^2 = (1 - 1e-3) R^2 (or the zero signal).
struct DisturbanceSignal {
  double horizon = 1.0;
  int dim = 0;
  std::vector<Eigen::VectorXd> levels;  // empty means d = 0

  Eigen::VectorXd at(double t) const;
  double energy() const;
};

DisturbanceSignal make_disturbance(int n_d, double R, double T, std::uint64_t seed,
                                   bool zero = false, int segments = 20);

struct Trajectory {
  std::vector<double> time;
  std::vector<Eigen::VectorXd> xg, xpsi, xt, u, v, w, d, z;
  bool diverged = false;
  double first_bad_time = 0.0;

  double terminal_target_slack(const Polynomial& px,
                               const std::vector<std::string>& xg_names) const;
};

/// Fixed-step classical RK4 integration of the closed loop: extended plant,
/// controller (static or dynamic), the virtual IQC filter inside f_ext, and
/// the perturbation realization. x0 lives on the certified slice
/// (x_psi = 0, x~ = 0); xt0 overrides the auxiliary-state start for
/// open-loop style experiments. Requires the perturbation input map h to be
/// independent of w.
Trajectory simulate(const ExtendedSystem& E, const Certificate& cert,
                    const Eigen::VectorXd& x0_G, const PerturbationSample& pert,
                    const DisturbanceSignal& dist, double dt,
                    const Eigen::VectorXd& xt0 = Eigen::VectorXd());

/// Rejection sampling of {x_G : V(0, x_G, 0, 0) <= gamma} inside a box.
/// Returns accepted points; deterministic for a fixed seed.
std::vector<Eigen::VectorXd> sample_level_set(const Certificate& cert,
                                              const std::vector<std::pair<double, double>>& box,
                                              int n_draws, std::uint64_t seed);

struct VolumeEstimate {
  double volume = 0.0;
  double stderr_ = 0.0;
  int hits = 0;
  int draws = 0;
};

VolumeEstimate mc_volume(const Certificate& cert,
                         const std::vector<std::pair<double, double>>& box, int n_draws,
                         std::uint64_t seed);

struct FalsifyOutcome {
  bool counterexample_found = false;
  bool untested = false;
  std::string violation;  // which audit failed
  Trajectory trajectory;
  Eigen::VectorXd x0;
  PerturbationSample pert;
};

/// Random + boundary-biased adversarial search for a certified initial
/// condition, admissible perturbation and disturbance whose trajectory
/// misses the target or violates the control polytope.
FalsifyOutcome falsify(const ExtendedSystem& E, const Certificate& cert, int budget,
                       const std::vector<std::pair<double, double>>& box, double dt,
                       std::uint64_t seed);

// ---- small grid Hamilton-Jacobi oracle (2-state cross-checks) -------------

using Dyn2 = std::function<void(double x1, double x2, double u, double delta, double& dx1,
                                double& dx2)>;

struct HjResult {
  int nx = 0, ny = 0;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  int steps = 0;
  double dt = 0.0;
  std::vector<std::uint8_t> inside;  // row-major [iy * nx + ix], 1 = in the BRS

  bool cell_inside(int ix, int iy) const;
  /// Point membership with Chebyshev dilation by `dilate_cells`.
  bool contains(double x, double y, int dilate_cells) const;
  /// Every inside-cell keeps the flag only if its Chebyshev r-neighborhood is
  /// inside too.
  HjResult eroded(int cells) const;
};

/// Backward dynamic programming for two-state dynamics with a scalar control
/// sampled on a finite set and finitely many fixed delta values; a cell
/// belongs to the oracle BRS only if it reaches the target for every delta.
/// The time step comes from the CFL bound cfl * min(hx/|f1|, hy/|f2|).
HjResult grid_hj_oracle(const Dyn2& dyn, const std::vector<double>& controls,
                        const std::vector<double>& deltas, const Polynomial& px,
                        const std::vector<std::string>& state_names, double T, double xmin,
                        double xmax, double ymin, double ymax, int nx, int ny,
                        double cfl = 0.5);

}  // namespace brs

#endif  // BRS_VALIDATE_HPP
