#include "brs/validate.hpp"

#include <cmath>
#include <random>

namespace brs {

std::uint64_t derive_seed(std::uint64_t root, const std::string& purpose, std::uint64_t index) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = root ^ h ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;  // splitmix64 finalizer
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool PerturbationSample::check_class() const {
  switch (kind) {
    case PerturbKind::SectorNl: {
      // c(v) = alpha + (beta - alpha) sin^2(...) lies in [alpha, beta] for
      // every argument as long as beta >= alpha.
      return beta >= alpha;
    }
    case PerturbKind::ConstantDelta:
      return std::abs(delta) <= sigma + 1e-15;
    case PerturbKind::LtiNormBound:
      // sigma * gain * all-pass: H-infinity norm is sigma * |gain|.
      return std::abs(gain) <= 1.0 + 1e-15 && w0 > 0.0;
    case PerturbKind::NlGain:
      return std::abs(gain) <= 1.0 + 1e-15;
    case PerturbKind::None:
      return true;
  }
  return false;
}

std::string PerturbationSample::describe() const {
  switch (kind) {
    case PerturbKind::SectorNl:
      return "sector[" + std::to_string(alpha) + "," + std::to_string(beta) +
             "] rho=" + std::to_string(rho) + " phi=" + std::to_string(phi);
    case PerturbKind::ConstantDelta:
      return "delta=" + std::to_string(delta);
    case PerturbKind::LtiNormBound:
      return "allpass gain=" + std::to_string(sigma * gain) + " w0=" + std::to_string(w0);
    case PerturbKind::NlGain:
      return "gain sigma*" + std::to_string(gain) + "*sin(" + std::to_string(omega) + " t+" +
             std::to_string(phase) + ")";
    case PerturbKind::None:
      return "none";
  }
  return "?";
}

std::vector<PerturbKind> admissible_kinds(MKind mkind) {
  switch (mkind) {
    case MKind::Sector:
      return {PerturbKind::SectorNl};
    case MKind::D:
      return {PerturbKind::ConstantDelta, PerturbKind::LtiNormBound};
    case MKind::DG:
      return {PerturbKind::ConstantDelta};
    case MKind::NLgain:
      return {PerturbKind::NlGain, PerturbKind::ConstantDelta, PerturbKind::LtiNormBound};
    case MKind::None:
      return {PerturbKind::None};
  }
  return {PerturbKind::None};
}

PerturbationSample draw_perturbation(MKind mkind, const MSet& mset, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto kinds = admissible_kinds(mkind);
  PerturbationSample p;
  p.kind = kinds[rng() % kinds.size()];
  switch (p.kind) {
    case PerturbKind::SectorNl:
      p.alpha = mset.alpha;
      p.beta = mset.beta;
      // rho = 0 draws reduce to constant gains inside the sector.
      p.rho = unif(rng) < 0.3 ? 0.0 : 20.0 * unif(rng);
      p.phi = 2.0 * M_PI * unif(rng);
      break;
    case PerturbKind::ConstantDelta:
      p.sigma = mset.sigma;
      p.delta = mset.sigma * (2.0 * unif(rng) - 1.0);
      if (unif(rng) < 0.25) p.delta = (unif(rng) < 0.5 ? -1.0 : 1.0) * mset.sigma;
      break;
    case PerturbKind::LtiNormBound:
      p.sigma = mset.sigma;
      p.gain = 2.0 * unif(rng) - 1.0;
      p.w0 = std::pow(10.0, -1.0 + 3.0 * unif(rng));
      break;
    case PerturbKind::NlGain:
      p.sigma = mset.sigma;
      p.gain = 2.0 * unif(rng) - 1.0;
      if (unif(rng) < 0.25) p.gain = unif(rng) < 0.5 ? -1.0 : 1.0;
      p.omega = 30.0 * unif(rng);
      p.phase = 2.0 * M_PI * unif(rng);
      break;
    case PerturbKind::None:
      break;
  }
  if (!p.check_class()) throw std::logic_error("draw_perturbation: drew an invalid sample");
  return p;
}

Eigen::VectorXd DisturbanceSignal::at(double t) const {
  if (levels.empty()) return Eigen::VectorXd::Zero(dim);
  const int n = static_cast<int>(levels.size());
  int seg = static_cast<int>(std::floor(t / horizon * n));
  seg = std::clamp(seg, 0, n - 1);
  return levels[seg];
}

double DisturbanceSignal::energy() const {
  if (levels.empty()) return 0.0;
  const double piece = horizon / levels.size();
  double e = 0.0;
  for (const auto& l : levels) e += piece * l.squaredNorm();
  return e;
}

DisturbanceSignal make_disturbance(int n_d, double R, double T, std::uint64_t seed, bool zero,
                                   int segments) {
  DisturbanceSignal sig;
  sig.horizon = T;
  sig.dim = n_d;
  if (zero || n_d == 0) return sig;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  sig.levels.resize(segments, Eigen::VectorXd::Zero(n_d));
  double raw = 0.0;
  for (auto& l : sig.levels) {
    for (int i = 0; i < n_d; ++i) l[i] = gauss(rng);
    raw += (T / segments) * l.squaredNorm();
  }
  const double scale = std::sqrt((1.0 - 1e-3) * R * R / std::max(raw, 1e-300));
  for (auto& l : sig.levels) l *= scale;
  return sig;
}

double Trajectory::terminal_target_slack(const Polynomial& px,
                                         const std::vector<std::string>& xg_names) const {
  if (xg.empty()) return std::numeric_limits<double>::infinity();
  std::unordered_map<std::string, double> vals;
  for (size_t i = 0; i < xg_names.size(); ++i) vals[xg_names[i]] = xg.back()[i];
  return px.evaluate(vals);
}

namespace {

// Compiled evaluation of a polynomial vector over a flat value buffer.
struct PolyVec {
  std::vector<Polynomial> rows;
  const VariableSet* vars = nullptr;

  Eigen::VectorXd eval(const std::vector<double>& vals) const {
    Eigen::VectorXd out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) out[i] = rows[i].evaluate(vals);
    return out;
  }
};

}  // namespace

Trajectory simulate(const ExtendedSystem& E, const Certificate& cert,
                    const Eigen::VectorXd& x0_G, const PerturbationSample& pert,
                    const DisturbanceSignal& dist, double dt, const Eigen::VectorXd& xt0) {
  if (dt <= 0.0) throw std::invalid_argument("simulate: dt must be positive");
  if (x0_G.size() != E.n_G()) throw std::invalid_argument("simulate: x0 dimension mismatch");
  const int n_x = E.n_x(), n_xt = E.n_xt(), n_v = E.h_sub.rows(), n_w = E.n_w();
  if (n_v > 0) {
    for (int i = 0; i < n_v; ++i)
      for (const auto& wn : E.w_names)
        if (E.h_sub.at(i, 0).degree_in(E.vars->index_of(wn)) > 0)
          throw std::invalid_argument("simulate: h depends on w (algebraic loop)");
  }
  if (n_w > 1 || n_v > 1)
    if (pert.kind != PerturbKind::None)
      throw std::invalid_argument("simulate: scalar perturbation channel expected");

  // Flat value buffer ordered like E.vars, with controller/time handled
  // separately.
  const int nv_total = E.vars->size();
  std::vector<int> idx_xg(E.n_G()), idx_xpsi(E.n_psi()), idx_xt(n_xt), idx_u(E.n_u_direct()),
      idx_w(n_w), idx_d(E.n_d());
  for (int i = 0; i < E.n_G(); ++i) idx_xg[i] = E.vars->index_of(E.xg_names[i]);
  for (int i = 0; i < E.n_psi(); ++i) idx_xpsi[i] = E.vars->index_of(E.xpsi_names[i]);
  for (int i = 0; i < n_xt; ++i) idx_xt[i] = E.vars->index_of(E.xt_names[i]);
  for (int i = 0; i < E.n_u_direct(); ++i) idx_u[i] = E.vars->index_of(E.u_direct_names[i]);
  for (int i = 0; i < n_w; ++i) idx_w[i] = E.vars->index_of(E.w_names[i]);
  for (int i = 0; i < E.n_d(); ++i) idx_d[i] = E.vars->index_of(E.d_names[i]);

  // Controllers carry their own variable sets (t, x_G [, x~]).
  auto eval_controller = [&](const Polynomial& k, double t, const Eigen::VectorXd& xg,
                             const Eigen::VectorXd& xt) {
    std::unordered_map<std::string, double> vals;
    vals["t"] = t;
    for (int i = 0; i < E.n_G(); ++i) vals[E.xg_names[i]] = xg[i];
    for (int i = 0; i < n_xt; ++i) vals[E.xt_names[i]] = xt[i];
    return k.evaluate(vals);
  };

  const int pert_states = pert.has_state() ? 1 : 0;
  const int n_state = n_x + n_xt + pert_states;

  // w as a function of (t, v, perturbation state).
  auto w_of = [&](double t, double v, double xf) -> double {
    switch (pert.kind) {
      case PerturbKind::SectorNl: {
        const double s = std::sin(pert.rho * v + pert.phi);
        return (pert.alpha + (pert.beta - pert.alpha) * s * s) * v;
      }
      case PerturbKind::ConstantDelta:
        return pert.delta * v;
      case PerturbKind::LtiNormBound:
        return pert.sigma * pert.gain * (xf - v);
      case PerturbKind::NlGain:
        return pert.sigma * pert.gain * std::sin(pert.omega * t + pert.phase) * v;
      case PerturbKind::None:
        return 0.0;
    }
    return 0.0;
  };

  const int steps = static_cast<int>(std::ceil(E.horizon / dt - 1e-9));
  Trajectory traj;
  traj.time.reserve(steps + 1);

  Eigen::VectorXd state = Eigen::VectorXd::Zero(n_state);
  state.head(E.n_G()) = x0_G;
  if (xt0.size()) {
    if (xt0.size() != n_xt) throw std::invalid_argument("simulate: xt0 dimension mismatch");
    state.segment(n_x, n_xt) = xt0;
  }

  std::vector<double> vals(nv_total, 0.0);
  auto derivative = [&](double t, const Eigen::VectorXd& s, Eigen::VectorXd& ds,
                        Eigen::VectorXd* rec_u, Eigen::VectorXd* rec_v, Eigen::VectorXd* rec_w,
                        Eigen::VectorXd* rec_z) {
    const Eigen::VectorXd xg = s.head(E.n_G());
    const Eigen::VectorXd xt = s.segment(n_x, n_xt);
    const double xf = pert_states ? s[n_state - 1] : 0.0;
    const Eigen::VectorXd d = dist.at(t);

    for (int i = 0; i < n_x; ++i) vals[E.vars->index_of((i < E.n_G()) ? E.xg_names[i]
                                                                      : E.xpsi_names[i - E.n_G()])] = s[i];
    for (int i = 0; i < n_xt; ++i) vals[idx_xt[i]] = s[n_x + i];
    for (int i = 0; i < E.n_d(); ++i) vals[idx_d[i]] = d[i];

    Eigen::VectorXd u(E.n_u_direct());
    for (int c = 0; c < E.n_u_direct(); ++c) {
      u[c] = eval_controller(cert.k_direct[c], t, xg, xt);
      vals[idx_u[c]] = u[c];
    }
    double v = 0.0, w = 0.0;
    if (n_v == 1) {
      for (int i = 0; i < n_w; ++i) vals[idx_w[i]] = 0.0;  // h is w-free
      v = E.h_sub.at(0, 0).evaluate(vals);
      w = w_of(t, v, xf);
    }
    for (int i = 0; i < n_w; ++i) vals[idx_w[i]] = w;

    ds.resize(n_state);
    for (int i = 0; i < n_x; ++i) {
      double fi = E.f_ext.at(i, 0).evaluate(vals);
      for (int c = 0; c < E.n_u_direct(); ++c) fi += E.g_ext.at(i, c).evaluate(vals) * u[c];
      ds[i] = fi;
    }
    for (int k = 0; k < n_xt; ++k)
      ds[n_x + k] = eval_controller(cert.k_tilde[k], t, xg, xt);
    if (pert_states) ds[n_state - 1] = -pert.w0 * xf + 2.0 * pert.w0 * v;

    if (rec_u) *rec_u = u;
    if (rec_v) *rec_v = Eigen::VectorXd::Constant(n_v, v);
    if (rec_w) *rec_w = Eigen::VectorXd::Constant(n_w, w);
    if (rec_z) {
      rec_z->resize(E.n_z());
      for (int i = 0; i < E.n_z(); ++i) (*rec_z)[i] = E.H.at(i, 0).evaluate(vals);
    }
  };

  Eigen::VectorXd k1, k2, k3, k4;
  for (int step = 0; step <= steps; ++step) {
    const double t = std::min(step * dt, E.horizon);
    Eigen::VectorXd u, v, w, z;
    derivative(t, state, k1, &u, &v, &w, &z);
    traj.time.push_back(t);
    traj.xg.push_back(state.head(E.n_G()));
    traj.xpsi.push_back(state.segment(E.n_G(), E.n_psi()));
    traj.xt.push_back(state.segment(n_x, n_xt));
    traj.u.push_back(u);
    traj.v.push_back(v);
    traj.w.push_back(w);
    traj.d.push_back(dist.at(t));
    traj.z.push_back(z);
    if (!state.allFinite() || state.lpNorm<Eigen::Infinity>() > 1e6) {
      traj.diverged = true;
      traj.first_bad_time = t;
      break;
    }
    if (step == steps) break;
    const double h = std::min(dt, E.horizon - t);
    derivative(t + 0.5 * h, state + 0.5 * h * k1, k2, nullptr, nullptr, nullptr, nullptr);
    derivative(t + 0.5 * h, state + 0.5 * h * k2, k3, nullptr, nullptr, nullptr, nullptr);
    derivative(t + h, state + h * k3, k4, nullptr, nullptr, nullptr, nullptr);
    state += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return traj;
}

std::vector<Eigen::VectorXd> sample_level_set(const Certificate& cert,
                                              const std::vector<std::pair<double, double>>& box,
                                              int n_draws, std::uint64_t seed) {
  if (static_cast<int>(box.size()) != cert.n_G())
    throw std::invalid_argument("sample_level_set: box dimension mismatch");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::VectorXd> hits;
  Eigen::VectorXd x(cert.n_G());
  for (int i = 0; i < n_draws; ++i) {
    for (int j = 0; j < cert.n_G(); ++j)
      x[j] = box[j].first + (box[j].second - box[j].first) * unif(rng);
    if (cert.V0_slice(x) <= cert.gamma) hits.push_back(x);
  }
  return hits;
}

VolumeEstimate mc_volume(const Certificate& cert,
                         const std::vector<std::pair<double, double>>& box, int n_draws,
                         std::uint64_t seed) {
  VolumeEstimate est;
  est.draws = n_draws;
  est.hits = static_cast<int>(sample_level_set(cert, box, n_draws, seed).size());
  double box_vol = 1.0;
  for (const auto& [lo, hi] : box) box_vol *= (hi - lo);
  const double p = est.draws ? static_cast<double>(est.hits) / est.draws : 0.0;
  est.volume = p * box_vol;
  est.stderr_ = box_vol * std::sqrt(std::max(p * (1.0 - p), 0.0) / std::max(est.draws, 1));
  return est;
}

FalsifyOutcome falsify(const ExtendedSystem& E, const Certificate& cert, int budget,
                       const std::vector<std::pair<double, double>>& box, double dt,
                       std::uint64_t seed) {
  FalsifyOutcome out;
  if (budget <= 0) {
    out.untested = true;
    return out;
  }
  // Candidate pool: level-set samples, biased toward the boundary by ray
  // scaling toward V(0, x) = gamma.
  std::vector<Eigen::VectorXd> pool =
      sample_level_set(cert, box, std::max(50 * budget, 2000), derive_seed(seed, "pool", 0));
  if (pool.empty()) {
    out.untested = true;
    out.violation = "empty certified set estimate";
    return out;
  }
  std::mt19937_64 rng(derive_seed(seed, "falsify", 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int trial = 0; trial < budget; ++trial) {
    Eigen::VectorXd x0 = pool[rng() % pool.size()];
    if (unif(rng) < 0.7) {
      // Push outward along the ray until just inside the gamma level.
      double lo = 1.0, hi = 1.0;
      for (int g = 0; g < 40 && cert.V0_slice(hi * x0) <= cert.gamma; ++g) {
        lo = hi;
        hi *= 1.25;
      }
      for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cert.V0_slice(mid * x0) <= cert.gamma ? lo : hi) = mid;
      }
      x0 *= lo * (1.0 - 1e-9);
    }
    const PerturbationSample pert =
        draw_perturbation(cert.mkind, MSet{cert.mkind, cert.sigma, cert.alpha, cert.beta, 0, 0,
                                           1, 1},
                          derive_seed(seed, "pert", trial));
    const DisturbanceSignal dist = make_disturbance(
        E.n_d(), E.R, E.horizon, derive_seed(seed, "dist", trial), trial % 3 == 0);
    const Trajectory traj = simulate(E, cert, x0, pert, dist, dt);

    std::string violation;
    if (traj.diverged) {
      violation = "trajectory diverged";
    } else if (traj.terminal_target_slack(cert.target, cert.xg_names) > 1e-6) {
      violation = "terminal state missed the target";
    } else {
      for (size_t s = 0; s < traj.time.size() && violation.empty(); ++s) {
        // Control polytope over the original inputs (direct + perturbed).
        for (int r = 0; r < E.P.rows() && violation.empty(); ++r) {
          double pu = 0.0;
          const auto rows = E.polytope_rows();
          for (const auto& [c, coeff] : rows[r].direct) pu += coeff * traj.u[s][c];
          for (const auto& [k, coeff] : rows[r].perturbed) pu += coeff * traj.xt[s][k];
          if (pu > E.b(r) + 1e-6) violation = "control polytope violated";
        }
      }
    }
    if (!violation.empty()) {
      out.counterexample_found = true;
      out.violation = violation;
      out.trajectory = traj;
      out.x0 = x0;
      out.pert = pert;
      return out;
    }
  }
  return out;
}

}  // namespace brs
