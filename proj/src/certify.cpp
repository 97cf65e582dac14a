#include "brs/certify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>
#include <tuple>

#include "brs/lqr.hpp"

namespace brs {

namespace {

double now_sec() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int round_up_even(int d) { return d <= 0 ? 0 : 2 * ((d + 1) / 2); }

Polynomial sum_of_squares_of(const std::vector<std::string>& names, const VarSetPtr& vars) {
  Polynomial p(vars);
  for (const auto& n : names) {
    const Polynomial v = Polynomial::variable(n, vars);
    p += v * v;
  }
  return p;
}

Polynomial quad_form(const std::vector<std::string>& names, const Eigen::MatrixXd& Y,
                     const Eigen::VectorXd& center, const VarSetPtr& vars) {
  Polynomial p(vars);
  const int n = static_cast<int>(names.size());
  for (int i = 0; i < n; ++i) {
    Polynomial vi = Polynomial::variable(names[i], vars) - Polynomial(center[i], vars);
    for (int j = 0; j < n; ++j) {
      Polynomial vj = Polynomial::variable(names[j], vars) - Polynomial(center[j], vars);
      p += Y(i, j) * (vi * vj);
    }
  }
  return p;
}

Eigen::MatrixXd sym_unit(int n, int p, int q) {
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  E(p, q) = E(q, p) = 1.0;
  return E;
}

}  // namespace

double Certificate::V0_slice(const Eigen::VectorXd& xg) const {
  std::unordered_map<std::string, double> vals;
  vals["t"] = 0.0;
  for (int i = 0; i < n_G(); ++i) vals[xg_names[i]] = xg[i];
  for (const auto& n : xpsi_names) vals[n] = 0.0;
  for (const auto& n : xt_names) vals[n] = 0.0;
  return V.evaluate(vals);
}

// ---------------------------------------------------------------------------
// Shared assembly machinery

namespace {

struct VarSets {
  VarSetPtr diss;    // (t, x_G, x_psi, x~, w, d)
  VarSetPtr cont;    // (x_G, x_psi, x~)
  VarSetPtr tube;    // (t, x_G, x_psi, x~)
  VarSetPtr v_of;    // (t, x_G, x_psi, x~)
  VarSetPtr k_of;    // (t, x_G)
  VarSetPtr kt_of;   // (t, x_G, x~)
  VarSetPtr lam_of;  // (x_G, x~, w)
};

VarSets make_var_sets(const ExtendedSystem& E) {
  auto cat = [](std::initializer_list<const std::vector<std::string>*> parts,
                std::initializer_list<std::string> pre = {}) {
    std::vector<std::string> names(pre);
    for (const auto* p : parts) names.insert(names.end(), p->begin(), p->end());
    return make_vars(std::move(names));
  };
  VarSets vs;
  vs.diss = cat({&E.xg_names, &E.xpsi_names, &E.xt_names, &E.w_names, &E.d_names}, {"t"});
  vs.cont = cat({&E.xg_names, &E.xpsi_names, &E.xt_names});
  vs.tube = cat({&E.xg_names, &E.xpsi_names, &E.xt_names}, {"t"});
  vs.v_of = vs.tube;
  vs.k_of = cat({&E.xg_names}, {"t"});
  vs.kt_of = cat({&E.xg_names, &E.xt_names}, {"t"});
  vs.lam_of = cat({&E.xg_names, &E.xt_names, &E.w_names});
  return vs;
}

struct Degrees {
  int V, k, s1, s2, s3, s4, s5, s6, s0, lambda;
};

Degrees resolve_degrees(const SynthesisConfig& cfg, const ExtendedSystem& E) {
  Degrees d;
  d.V = cfg.deg_V;
  d.k = cfg.deg_k >= 0 ? cfg.deg_k : std::max(1, cfg.deg_V - 1);
  d.s1 = cfg.deg_s1 >= 0 ? cfg.deg_s1 : round_up_even(cfg.deg_V);
  d.s2 = cfg.deg_s2 >= 0 ? cfg.deg_s2 : round_up_even(cfg.deg_V);
  const int deg_px = std::max(0, E.target.degree());
  d.s3 = cfg.deg_s3 >= 0 ? cfg.deg_s3 : round_up_even(std::max(0, cfg.deg_V - deg_px));
  d.s4 = cfg.deg_s4;
  d.s5 = cfg.deg_s5;
  d.s6 = cfg.deg_s6;
  d.s0 = cfg.deg_s0;
  d.lambda = cfg.deg_lambda;
  return d;
}

enum class Phase { Gamma, VStep, Audit };

// One assembled program together with the handle registries needed to read
// the solution back.
struct Assembled {
  SosProgram prog;
  ParamPolynomial V, s1, s2, s3, s0;
  std::vector<ParamPolynomial> k_direct, k_tilde, s4, s5, s6;
  ParamPolynomial lambda;
  std::vector<Handle> m11, m12, y22, y1;
  Handle nl_lambda = -1;
  Handle margin = -1;
  std::vector<std::pair<std::string, Polynomial>> audit_exprs;  // Phase::Audit only
};

class Builder {
 public:
  Builder(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg)
      : E_(E), iqc_(iqc), cfg_(cfg), vs_(make_var_sets(E)), deg_(resolve_degrees(cfg, E)) {
    compute_scales();
    x_names_ = E.xg_names;
    x_names_.insert(x_names_.end(), E.xpsi_names.begin(), E.xpsi_names.end());

    pt_ = Polynomial::variable("t", vs_.diss) *
          (Polynomial(E.horizon, vs_.diss) - Polynomial::variable("t", vs_.diss));
    px_ = scaled(E.target).with_vars(vs_.cont);
    dd_ = Polynomial(vs_.diss);
    for (const auto& dn : E.d_names) {
      const Polynomial dv = Polynomial::variable(dn, vs_.diss);
      dd_ += (sigma(dn) * sigma(dn)) * (dv * dv);
    }
    for (int i = 0; i < E.H.rows(); ++i) z_.push_back(scaled(E.H.at(i, 0)).with_vars(vs_.diss));
    for (int i = 0; i < E.n_x(); ++i) {
      const double s_row = sigma(x_names_[i]);
      f_.push_back((1.0 / s_row) * scaled(E.f_ext.at(i, 0)).with_vars(vs_.diss));
      std::vector<Polynomial> row;
      for (int c = 0; c < E.n_u_direct(); ++c)
        row.push_back((sigma(E.u_direct_names[c]) / s_row) *
                      scaled(E.g_ext.at(i, c)).with_vars(vs_.diss));
      g_.push_back(std::move(row));
    }
  }

  const VarSets& var_sets() const { return vs_; }
  const Degrees& degrees() const { return deg_; }
  double sigma(const std::string& name) const {
    auto it = sigma_.find(name);
    return it == sigma_.end() ? 1.0 : it->second;
  }
  // Into scaled coordinates (x = sigma xhat, same variable names) and back.
  Polynomial scaled(const Polynomial& p) const { return p.substitute(scale_subs_); }
  Polynomial unscaled(const Polynomial& p) const { return p.substitute(unscale_subs_); }

  Assembled build(Phase phase, double gamma, const Certificate& cur) const {
    Assembled a;
    SosProgram& prog = a.prog;
    const bool soft = iqc_.hardness == Hardness::Soft;
    const bool vstep = phase == Phase::VStep;
    const bool audit = phase == Phase::Audit;

    // --- decision / frozen polynomials (frozen data enters scaled) --------
    auto frozen_k_direct = [&](int c) {
      return ParamPolynomial((1.0 / sigma(E_.u_direct_names[c])) *
                             scaled(cur.k_direct[c]).with_vars(vs_.k_of));
    };
    auto frozen_k_tilde = [&](int k) {
      return ParamPolynomial((1.0 / sigma(E_.xt_names[k])) *
                             scaled(cur.k_tilde[k]).with_vars(vs_.kt_of));
    };
    if (vstep || audit) {
      if (audit)
        a.V = ParamPolynomial(scaled(cur.V).with_vars(vs_.v_of));
      else
        a.V = ParamPolynomial::free_poly(vs_.v_of, deg_.V, prog.alloc);
      for (int c = 0; c < E_.n_u_direct(); ++c) a.k_direct.push_back(frozen_k_direct(c));
      for (int k = 0; k < E_.n_xt(); ++k) a.k_tilde.push_back(frozen_k_tilde(k));
      a.s2 = ParamPolynomial(scaled(cur.s2).with_vars(vs_.diss));
      for (const auto& s : cur.s5) a.s5.emplace_back(scaled(s).with_vars(vs_.tube));
    } else {
      a.V = ParamPolynomial(scaled(cur.V).with_vars(vs_.v_of));
      for (int c = 0; c < E_.n_u_direct(); ++c)
        a.k_direct.push_back(ParamPolynomial::free_poly(vs_.k_of, deg_.k, prog.alloc));
      for (int k = 0; k < E_.n_xt(); ++k)
        a.k_tilde.push_back(ParamPolynomial::free_poly(vs_.kt_of, deg_.k, prog.alloc));
      a.s2 = prog.new_sos_poly(vs_.diss, deg_.s2, "s2");
      for (int i = 0; i < E_.P.rows(); ++i)
        a.s5.push_back(prog.new_sos_poly(vs_.tube, deg_.s5, "s5_" + std::to_string(i)));
    }

    if (audit) {
      a.s1 = ParamPolynomial(scaled(cur.s1).with_vars(vs_.diss));
      a.s3 = ParamPolynomial(scaled(cur.s3).with_vars(vs_.cont));
      for (const auto& s : cur.s4) a.s4.emplace_back(scaled(s).with_vars(vs_.tube));
      for (const auto& s : cur.s6) a.s6.emplace_back(scaled(s).with_vars(vs_.cont));
    } else {
      a.s1 = prog.new_sos_poly(vs_.diss, deg_.s1, "s1");
      a.s3 = ParamPolynomial::constant(cfg_.epsilon_s3, vs_.cont) +
             prog.new_sos_poly(vs_.cont, deg_.s3, "s3");
      for (int i = 0; i < E_.P.rows(); ++i)
        a.s4.push_back(prog.new_sos_poly(vs_.tube, deg_.s4, "s4_" + std::to_string(i)));
      if (E_.actuator_uncertain)
        for (size_t i = 0; i < containment_rows().size(); ++i)
          a.s6.push_back(prog.new_sos_poly(vs_.cont, deg_.s6, "s6_" + std::to_string(i)));
    }

    // --- the level function and its soft shift ---------------------------
    // Vcal = V - x_psi' Y22 x_psi; Y22 is a decision only in the soft V-step.
    // The Y22 handles are allocated here so the DG side constraints below can
    // reference them.
    ParamPolynomial vcal = a.V;
    if (soft) {
      if (vstep) {
        // Handles hold the original-coordinate Y22 entries (the KYP side
        // constraint lives there), so the scaled shift carries the sigmas.
        const int np = E_.n_psi();
        for (int p = 0; p < np; ++p)
          for (int q = p; q < np; ++q) {
            const Handle h = prog.alloc.fresh();
            a.y22.push_back(h);
            Polynomial xx = Polynomial::variable(E_.xpsi_names[p], vs_.v_of) *
                            Polynomial::variable(E_.xpsi_names[q], vs_.v_of);
            const double w = (p == q ? 1.0 : 2.0) * sigma(E_.xpsi_names[p]) *
                             sigma(E_.xpsi_names[q]);
            vcal -= ParamPolynomial::scalar_handle(h, w * xx);
          }
      } else {
        Polynomial shift(vs_.v_of);
        for (int p = 0; p < E_.n_psi(); ++p)
          for (int q = 0; q < E_.n_psi(); ++q)
            shift += cur.Y22(p, q) * sigma(E_.xpsi_names[p]) * sigma(E_.xpsi_names[q]) *
                     (Polynomial::variable(E_.xpsi_names[p], vs_.v_of) *
                      Polynomial::variable(E_.xpsi_names[q], vs_.v_of));
        vcal = vcal - ParamPolynomial(shift);
      }
    }

    // --- the multiplier matrix M (and the soft-IQC side constraints) ------
    ParamPolynomial zmz = build_zmz(phase, cur, prog, a);

    const double level = gamma + E_.R * E_.R;

    // --- dissipation ------------------------------------------------------
    {
      ParamPolynomial decay;  // dV/dt along the closed loop, scaled coordinates
      if (vstep || audit) {
        // V carries the handles: fold the frozen controller into F first.
        decay = a.V.differentiate("t");
        for (int i = 0; i < E_.n_x(); ++i) {
          Polynomial Fi = f_[i];
          for (int c = 0; c < E_.n_u_direct(); ++c)
            Fi += g_[i][c] * a.k_direct[c].fixed().with_vars(vs_.diss);
          decay += Fi * a.V.differentiate(x_names_[i]);
        }
        for (int k = 0; k < E_.n_xt(); ++k)
          decay += a.k_tilde[k].fixed().with_vars(vs_.diss) * a.V.differentiate(E_.xt_names[k]);
      } else {
        const Polynomial Vfix = scaled(cur.V).with_vars(vs_.diss);
        decay = ParamPolynomial(Vfix.differentiate("t"));
        for (int i = 0; i < E_.n_x(); ++i) {
          const Polynomial dVi = Vfix.differentiate(x_names_[i]);
          decay += ParamPolynomial(dVi * f_[i]);
          for (int c = 0; c < E_.n_u_direct(); ++c) decay += (dVi * g_[i][c]) * a.k_direct[c];
        }
        for (int k = 0; k < E_.n_xt(); ++k)
          decay += Vfix.differentiate(E_.xt_names[k]) * a.k_tilde[k];
      }
      ParamPolynomial expr = -(decay + zmz - ParamPolynomial(dd_));
      expr -= pt_ * a.s1;
      expr += level_times(vcal, level, a.s2, vstep || audit);
      push_constraint(prog, a, "dissipation", expr, vs_.diss, audit);
    }

    // --- terminal containment ---------------------------------------------
    {
      ParamPolynomial vT =
          vcal.substitute({{"t", Polynomial(E_.horizon, vs_.v_of)}});
      ParamPolynomial expr = -(px_ * a.s3) + vT - ParamPolynomial::constant(level, vs_.cont);
      if (E_.actuator_uncertain) {
        const auto rows = containment_rows();
        for (size_t i = 0; i < rows.size(); ++i)
          expr += rows[i].with_vars(vs_.cont) * a.s6[i];
      }
      push_constraint(prog, a, "containment", expr, vs_.cont, audit);
    }

    // --- control polytope rows ---------------------------------------------
    const auto prows = E_.polytope_rows();
    for (size_t i = 0; i < prows.size(); ++i) {
      ParamPolynomial row_u = ParamPolynomial(Polynomial(vs_.tube));
      for (const auto& [c, coeff] : prows[i].direct)
        row_u += (coeff * sigma(E_.u_direct_names[c])) * promote(a.k_direct[c], vs_.tube);
      for (const auto& [k, coeff] : prows[i].perturbed)
        row_u += ParamPolynomial(coeff * sigma(E_.xt_names[k]) *
                                 Polynomial::variable(E_.xt_names[k], vs_.tube));
      ParamPolynomial expr =
          -(row_u - ParamPolynomial::constant(prows[i].bound, vs_.tube));
      expr -= pt_.with_vars(vs_.tube) * a.s4[i];
      ParamPolynomial vcal_tube = promote(vcal, vs_.tube);
      expr += level_times(vcal_tube, level, a.s5[i], vstep || audit);
      push_constraint(prog, a, "polytope_" + std::to_string(i), expr, vs_.tube, audit);
    }

    // --- level-set growth (V-step only; ties successive iterates, so it is
    // not part of the standalone certificate audit) -------------------------
    if (vstep) {
      a.s0 = prog.new_sos_poly(vs_.cont, deg_.s0, "s0");
      ParamPolynomial v_at0 =
          promote(a.V.substitute({{"t", Polynomial(0.0, vs_.v_of)}}), vs_.cont);
      const Polynomial vprev0 = scaled(cur.V)
                                    .with_vars(vs_.v_of)
                                    .substitute({{"t", Polynomial(0.0, vs_.v_of)}})
                                    .with_vars(vs_.cont);
      ParamPolynomial expr = ParamPolynomial::constant(gamma, vs_.cont) - v_at0 +
                             (vprev0 - Polynomial(gamma, vs_.cont)) * a.s0;
      push_constraint(prog, a, "levelset_growth", expr, vs_.cont, audit);
    }

    if (!audit && cfg_.use_margin) {
      // Feasibility margin: maximize delta in [0, margin_cap].
      a.margin = prog.alloc.fresh();
      HandleLmi lo;
      lo.name = "margin_lo";
      lo.dim = 1;
      lo.add_coeff(a.margin, 0, 0, 1.0);
      prog.lmis.push_back(lo);
      HandleLmi hi;
      hi.name = "margin_hi";
      hi.dim = 1;
      hi.add_constant(0, 0, cfg_.margin_cap);
      hi.add_coeff(a.margin, 0, 0, -1.0);
      prog.lmis.push_back(hi);
      for (auto& con : prog.constraints) con.margin_handle = a.margin;
      prog.objective.emplace_back(a.margin, 1.0);
    }
    return a;
  }

  // Affine x~-only polytope expressions (P_i x~ - b_i) for the containment
  // quantifier, in scaled coordinates; rows touching direct channels are
  // skipped (conservative).
  std::vector<Polynomial> containment_rows() const {
    std::vector<Polynomial> rows;
    for (const auto& row : E_.polytope_rows()) {
      if (!row.direct.empty() || row.perturbed.empty()) continue;
      Polynomial e(vs_.cont);
      for (const auto& [k, coeff] : row.perturbed)
        e += coeff * sigma(E_.xt_names[k]) * Polynomial::variable(E_.xt_names[k], vs_.cont);
      e -= Polynomial(row.bound, vs_.cont);
      rows.push_back(e);
    }
    return rows;
  }

 private:
  // Natural magnitudes per variable: the problem data (GTM coefficients span
  // 1e-3..60 over states of size ~0.1) otherwise produces Gram matrices the
  // interior-point method cannot finish on.
  void compute_scales() {
    auto clamp = [](double v) { return std::clamp(v, 1e-4, 1e4); };
    // Target axis intercepts scale the plant states.
    for (int i = 0; i < E_.n_G(); ++i) {
      std::unordered_map<std::string, double> vals;
      for (const auto& n : E_.xg_names) vals[n] = 0.0;
      double best = std::numeric_limits<double>::infinity();
      for (double dir : {1.0, -1.0}) {
        double lo = 0.0, hi = 1e-4;
        bool bracket = false;
        for (int g = 0; g < 60; ++g) {
          vals[E_.xg_names[i]] = dir * hi;
          if (E_.target.evaluate(vals) >= 0.0) {
            bracket = true;
            break;
          }
          lo = hi;
          hi *= 2.0;
        }
        if (!bracket) continue;
        for (int it = 0; it < 50; ++it) {
          const double mid = 0.5 * (lo + hi);
          vals[E_.xg_names[i]] = dir * mid;
          (E_.target.evaluate(vals) >= 0.0 ? hi : lo) = mid;
        }
        best = std::min(best, hi);
      }
      sigma_[E_.xg_names[i]] = std::isfinite(best) ? clamp(best) : 1.0;
    }
    // Control channels from the polytope bounds.
    auto channel_scale = [&](int orig) {
      double s = std::numeric_limits<double>::infinity();
      for (int r = 0; r < E_.P.rows(); ++r)
        if (E_.P(r, orig) != 0.0) s = std::min(s, std::abs(E_.b(r) / E_.P(r, orig)));
      return std::isfinite(s) ? clamp(s) : 1.0;
    };
    for (size_t c = 0; c < E_.direct_channels.size(); ++c)
      sigma_[E_.u_direct_names[c]] = channel_scale(E_.direct_channels[c]);
    for (size_t k = 0; k < E_.perturbed_channels.size(); ++k)
      sigma_[E_.xt_names[k]] = channel_scale(E_.perturbed_channels[k]);
    for (const auto& dn : E_.d_names) sigma_[dn] = clamp(std::max(E_.R, 1e-6));
    // Perturbation output: the class gain bound times the input magnitude,
    // where |v| is bounded by the absolute-coefficient evaluation of h.
    double sigma_v = 0.0;
    for (int r = 0; r < E_.h_sub.rows(); ++r) {
      double acc = 0.0;
      for (const auto& [mono, coeff] : E_.h_sub.at(r, 0).terms()) {
        double term = std::abs(coeff);
        for (size_t v = 0; v < mono.exp.size(); ++v)
          for (int e = 0; e < mono.exp[v]; ++e) term *= sigma(E_.vars->name(static_cast<int>(v)));
        acc += term;
      }
      sigma_v = std::max(sigma_v, acc);
    }
    double gain = 1.0;
    switch (iqc_.mset.kind) {
      case MKind::Sector: gain = std::max(std::abs(iqc_.mset.alpha), std::abs(iqc_.mset.beta)); break;
      case MKind::D:
      case MKind::DG:
      case MKind::NLgain: gain = iqc_.mset.sigma; break;
      case MKind::None: gain = 0.0; break;
    }
    const double sigma_w = clamp(std::max(gain * sigma_v, 1e-6));
    for (const auto& wn : E_.w_names) sigma_[wn] = sigma_w;
    // Filter states from their steady-state response to sigma-level inputs.
    if (E_.n_psi() > 0) {
      const Eigen::VectorXd ss =
          iqc_.filter.A.partialPivLu()
              .solve(iqc_.filter.B1 * Eigen::VectorXd::Constant(iqc_.filter.n_v(), sigma_v) +
                     iqc_.filter.B2 * Eigen::VectorXd::Constant(iqc_.filter.n_w(), sigma_w))
              .cwiseAbs();
      for (int p = 0; p < E_.n_psi(); ++p)
        sigma_[E_.xpsi_names[p]] = clamp(1.5 * ss[p] + 1e-6);
    }
    for (const auto& [name, s] : sigma_) {
      Polynomial var = Polynomial::variable(name, make_vars({name}));
      scale_subs_.emplace_back(name, s * var);
      unscale_subs_.emplace_back(name, (1.0 / s) * var);
    }
  }

  static ParamPolynomial promote(const ParamPolynomial& p, const VarSetPtr& vars) {
    ParamPolynomial out{p.fixed().with_vars(vars)};
    for (const auto& [h, q] : p.basis()) out.add_handle_term(h, q.with_vars(vars));
    return out;
  }

  // (Vcal - level) * s2, coded so the product always has a fixed side.
  static ParamPolynomial level_times(const ParamPolynomial& vcal, double level,
                                     const ParamPolynomial& s, bool s_is_fixed) {
    if (s_is_fixed) {
      const Polynomial sf = s.fixed();
      ParamPolynomial out = sf * vcal;
      return out - ParamPolynomial(level * sf);
    }
    const Polynomial vf = vcal.fixed() - Polynomial(level, vcal.fixed().vars());
    return vf * s;
  }

  void push_constraint(SosProgram& prog, Assembled& a, const std::string& name,
                       const ParamPolynomial& expr, const VarSetPtr& vars, bool audit) const {
    if (audit) {
      a.audit_exprs.emplace_back(name, expr.fixed());
    } else {
      prog.constraints.push_back({name, expr, vars, {}});
    }
  }

  // z' M z as a ParamPolynomial in the multiplier handles (or fixed).
  ParamPolynomial build_zmz(Phase phase, const Certificate& cur, SosProgram& prog,
                            Assembled& a) const {
    const bool vstep = phase == Phase::VStep;
    const bool audit = phase == Phase::Audit;
    const MSet& ms = iqc_.mset;
    switch (ms.kind) {
      case MKind::Sector: {
        const Eigen::Matrix2d base = ms.sector_base();
        Polynomial zbz(vs_.diss);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) zbz += base(i, j) * (z_[i] * z_[j]);
        if (audit) return ParamPolynomial(scaled(cur.lambda).with_vars(vs_.diss) * zbz);
        a.lambda = prog.new_sos_poly(vs_.lam_of, deg_.lambda, "lambda");
        return zbz * promote(a.lambda, vs_.diss);
      }
      case MKind::NLgain: {
        Polynomial profile(vs_.diss);
        for (int i = 0; i < ms.n_v; ++i) profile += ms.sigma * ms.sigma * (z_[i] * z_[i]);
        for (int i = 0; i < ms.n_w; ++i) {
          const Polynomial& zw = z_[ms.n_v + i];
          profile -= zw * zw;
        }
        if (audit) {
          const double lam = cur.M(0, 0) / (ms.sigma * ms.sigma);
          return ParamPolynomial(lam * profile);
        }
        a.nl_lambda = prog.alloc.fresh();
        HandleLmi pos;
        pos.name = "nl_lambda";
        pos.dim = 1;
        pos.add_coeff(a.nl_lambda, 0, 0, 1.0);
        prog.lmis.push_back(pos);
        return ParamPolynomial::scalar_handle(a.nl_lambda, profile);
      }
      case MKind::D:
      case MKind::DG: {
        const int r = ms.m11_dim;
        const bool m_decision = !audit && (iqc_.hardness == Hardness::Hard || vstep);
        if (!m_decision) {
          Polynomial out(vs_.diss);
          const Eigen::MatrixXd& M = cur.M;
          for (size_t i = 0; i < z_.size(); ++i)
            for (size_t j = 0; j < z_.size(); ++j)
              out += M(static_cast<int>(i), static_cast<int>(j)) * (z_[i] * z_[j]);
          return ParamPolynomial(out);
        }
        ParamPolynomial zmz{Polynomial(vs_.diss)};
        const double s2g = ms.sigma * ms.sigma;
        for (int i = 0; i < r; ++i)
          for (int j = i; j < r; ++j) {
            const Handle h = prog.alloc.fresh();
            a.m11.push_back(h);
            const double mult = (i == j) ? 1.0 : 2.0;
            Polynomial coeff = s2g * mult * (z_[i] * z_[j]) - mult * (z_[r + i] * z_[r + j]);
            zmz.add_handle_term(h, coeff);
          }
        if (ms.kind == MKind::DG) {
          for (int i = 0; i < r; ++i)
            for (int j = i + 1; j < r; ++j) {
              const Handle h = prog.alloc.fresh();
              a.m12.push_back(h);
              // M12 skew: contribution 2 z1' M12 z2.
              Polynomial coeff = 2.0 * (z_[i] * z_[r + j]) - 2.0 * (z_[j] * z_[r + i]);
              zmz.add_handle_term(h, coeff);
            }
          add_dg_side_constraints(prog, a);
        } else {
          // M11 >= 0 for the hard D scaling.
          HandleLmi psd;
          psd.name = "m11_psd";
          psd.dim = r;
          int idx = 0;
          for (int i = 0; i < r; ++i)
            for (int j = i; j < r; ++j) psd.add_coeff(a.m11[idx++], j, i, 1.0);
          prog.lmis.push_back(psd);
        }
        return zmz;
      }
      case MKind::None:
        return ParamPolynomial(Polynomial(vs_.diss));
    }
    throw std::logic_error("unreachable");
  }

  // DG: KYP positivity of psi11~ M11 psi11 (certificate Y1) and the Lemma
  // LMI KYP(Y22, A, B2, C, D2, M) <= -eps I, both affine in the handles.
  void add_dg_side_constraints(SosProgram& prog, Assembled& a) const {
    const MSet& ms = iqc_.mset;
    const int r = ms.m11_dim;
    const LinearSystem& col = iqc_.psi11;
    const int n1 = col.n_psi();
    {
      HandleLmi kyp_pos;
      kyp_pos.name = "m11_kyp_positive";
      kyp_pos.dim = n1 + 1;
      int idx = 0;
      const Eigen::MatrixXd Zr = Eigen::MatrixXd::Zero(r, r);
      for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) {
          const Eigen::MatrixXd K =
              kyp_matrix(Eigen::MatrixXd::Zero(n1, n1), col.A, col.B1, col.C, col.D1,
                         sym_unit(r, i, j));
          const Handle h = a.m11[idx++];
          for (int p = 0; p < kyp_pos.dim; ++p)
            for (int q = 0; q <= p; ++q) kyp_pos.add_coeff(h, p, q, K(p, q));
        }
      for (int p = 0; p < n1; ++p)
        for (int q = p; q < n1; ++q) {
          const Handle h = prog.alloc.fresh();
          a.y1.push_back(h);
          const Eigen::MatrixXd K = kyp_matrix(sym_unit(n1, p, q), col.A, col.B1, col.C,
                                               col.D1, Zr);
          for (int pp = 0; pp < kyp_pos.dim; ++pp)
            for (int qq = 0; qq <= pp; ++qq) kyp_pos.add_coeff(h, pp, qq, K(pp, qq));
        }
      prog.lmis.push_back(kyp_pos);
    }
    {
      const LinearSystem& sys = iqc_.filter;
      const int n = sys.n_psi();
      const int nz = sys.n_z();
      HandleLmi lemma;
      lemma.name = "kyp_y22";
      lemma.dim = n + sys.n_w();
      for (int i = 0; i < lemma.dim; ++i) lemma.add_constant(i, i, -cfg_.kyp_epsilon);
      Eigen::MatrixXd CD(nz, lemma.dim);
      CD << sys.C, sys.D2;
      const double s2g = ms.sigma * ms.sigma;
      int idx = 0;
      for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) {
          Eigen::MatrixXd S = Eigen::MatrixXd::Zero(nz, nz);
          S.topLeftCorner(r, r) = s2g * sym_unit(r, i, j);
          S.bottomRightCorner(r, r) = -sym_unit(r, i, j);
          const Eigen::MatrixXd K = CD.transpose() * S * CD;
          const Handle h = a.m11[idx++];
          for (int p = 0; p < lemma.dim; ++p)
            for (int q = 0; q <= p; ++q) lemma.add_coeff(h, p, q, -K(p, q));
        }
      idx = 0;
      for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) {
          Eigen::MatrixXd S = Eigen::MatrixXd::Zero(nz, nz);
          S(i, r + j) = S(r + j, i) = 1.0;
          S(j, r + i) = S(r + i, j) = -1.0;
          const Eigen::MatrixXd K = CD.transpose() * S * CD;
          const Handle h = a.m12[idx++];
          for (int p = 0; p < lemma.dim; ++p)
            for (int q = 0; q <= p; ++q) lemma.add_coeff(h, p, q, -K(p, q));
        }
      for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q) {
          const Eigen::MatrixXd K =
              kyp_matrix(sym_unit(n, p, q), sys.A, sys.B2, sys.C, sys.D2,
                         Eigen::MatrixXd::Zero(nz, nz));
          const Handle h = a.y22[p * n - p * (p - 1) / 2 + (q - p)];
          for (int pp = 0; pp < lemma.dim; ++pp)
            for (int qq = 0; qq <= pp; ++qq) lemma.add_coeff(h, pp, qq, -K(pp, qq));
        }
      prog.lmis.push_back(lemma);
    }
  }

  const ExtendedSystem& E_;
  const IqcSpec& iqc_;
  const SynthesisConfig& cfg_;
  VarSets vs_;
  Degrees deg_;
  Polynomial pt_, px_, dd_;
  std::vector<Polynomial> z_, f_;
  std::vector<std::vector<Polynomial>> g_;
  std::vector<std::string> x_names_;
  std::unordered_map<std::string, double> sigma_;
  std::vector<std::pair<std::string, Polynomial>> scale_subs_, unscale_subs_;
};

}  // namespace

// ---------------------------------------------------------------------------
// init_V0

Polynomial init_V0(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg) {
  (void)iqc;
  const int n_state = E.n_x() + E.n_xt();
  Eigen::VectorXd x_eq = cfg.x_eq.size() ? cfg.x_eq : Eigen::VectorXd::Zero(n_state);
  Eigen::VectorXd u_eq = cfg.u_eq.size() ? cfg.u_eq : Eigen::VectorXd::Zero(E.n_u_direct());
  auto [A, B] = linearize(E, x_eq, u_eq);

  const Eigen::MatrixXd Q =
      cfg.lqr_Q.size() ? cfg.lqr_Q : Eigen::MatrixXd::Identity(n_state, n_state);
  const Eigen::MatrixXd R =
      cfg.lqr_R.size() ? cfg.lqr_R : Eigen::MatrixXd::Identity(B.cols(), B.cols());
  const Eigen::MatrixXd P = solve_care(A, B, Q, R);
  const Eigen::MatrixXd K = R.llt().solve(B.transpose() * P);
  const Eigen::MatrixXd Acl = A - B * K;
  Eigen::MatrixXd Y = solve_lyapunov(Acl, Eigen::MatrixXd::Identity(n_state, n_state));
  Y = 0.5 * (Y + Y.transpose()).eval();

  // Project the quadratic onto x_G: the sublevel sets of x_G' Ytilde x_G are
  // the x_G shadows of the full sublevel sets.
  const int ng = E.n_G();
  Eigen::MatrixXd Yt = Y.topLeftCorner(ng, ng);
  if (n_state > ng) {
    const Eigen::MatrixXd Ygp = Y.topRightCorner(ng, n_state - ng);
    const Eigen::MatrixXd Ypp = Y.bottomRightCorner(n_state - ng, n_state - ng);
    Yt -= Ygp * Ypp.llt().solve(Ygp.transpose());
  }

  // Boundary sampling of {p_x = 0} to find the largest inscribed level.
  std::mt19937_64 rng(0x5eedbea7ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::VectorXd xg_eq = x_eq.head(ng);
  auto px_at = [&](const Eigen::VectorXd& xg) {
    std::unordered_map<std::string, double> vals;
    for (int i = 0; i < ng; ++i) vals[E.xg_names[i]] = xg[i];
    return E.target.evaluate(vals);
  };
  double gamma_max = std::numeric_limits<double>::infinity();
  for (int s = 0; s < cfg.init_samples; ++s) {
    Eigen::VectorXd dir(ng);
    for (int i = 0; i < ng; ++i) dir[i] = gauss(rng);
    if (dir.norm() < 1e-12) continue;
    dir.normalize();
    double lo = 0.0, hi = 1e-3;
    bool bracketed = false;
    for (int grow = 0; grow < 64; ++grow) {
      if (px_at(xg_eq + hi * dir) >= 0.0) {
        bracketed = true;
        break;
      }
      lo = hi;
      hi *= 2.0;
    }
    if (!bracketed) continue;  // unbounded target direction
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (px_at(xg_eq + mid * dir) >= 0.0 ? hi : lo) = mid;
    }
    const Eigen::VectorXd xb = hi * dir;
    gamma_max = std::min(gamma_max, xb.dot(Yt * xb));
  }
  if (!std::isfinite(gamma_max) || gamma_max <= 0.0)
    throw std::runtime_error("init_V0: target boundary sampling failed");

  // The level set must also stay inside the control slab |P x~| <= b
  // (Theorem-2 style polytope rows constrain the auxiliary state on the
  // level set). min of x'Yx on the face {x_k = beta} is beta^2 / (Y^{-1})_kk.
  if (E.n_xt() > 0) {
    const Eigen::MatrixXd Yinv = Y.inverse();
    for (const auto& row : E.polytope_rows()) {
      if (!row.direct.empty() || row.perturbed.size() != 1) continue;
      const auto& [k, coeff] = row.perturbed.front();
      const double beta = row.bound / std::abs(coeff);
      const int idx = E.n_x() + k;
      const double face_val = beta * beta / Yinv(idx, idx);
      gamma_max = std::min(gamma_max, 0.81 * face_val);
    }
  }
  const double c = (cfg.init_level + E.R * E.R) / gamma_max;

  std::vector<std::string> names = E.xg_names;
  names.insert(names.end(), E.xpsi_names.begin(), E.xpsi_names.end());
  names.insert(names.end(), E.xt_names.begin(), E.xt_names.end());
  std::vector<std::string> full = {"t"};
  full.insert(full.end(), names.begin(), names.end());
  const VarSetPtr vars = make_vars(full);
  return quad_form(names, c * Y, x_eq, vars);
}

// ---------------------------------------------------------------------------
// Engine: gamma-step, V-step, iterate

namespace {

class Engine {
 public:
  Engine(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg)
      : E_(E), iqc_(iqc), cfg_(cfg), builder_(E, iqc, cfg) {}

  // Solve one phase at a fixed gamma; on success fold the solution into
  // `snap`. Returns {feasible, margin}.
  std::pair<bool, double> solve_phase(Phase phase, double gamma, Certificate& snap) {
    const Assembled a = builder_.build(phase, gamma, snap);
    CompiledSos compiled = compile(a.prog);
    const SdpSolution sol = solve(compiled.sdp, cfg_.solver);
    if (cfg_.verbose) {
      std::cerr << (phase == Phase::Gamma ? "  gamma probe " : "  v-step ") << gamma << ": "
                << to_string(sol.status)
                << (sol.status == SdpStatus::Optimal
                        ? " margin=" + std::to_string(sol.objective)
                        : " (" + sol.message + ")")
                << " iters=" << sol.iterations << "\n";
      if (sol.status != SdpStatus::Optimal && sol.y.size() == compiled.sdp.num_vars) {
        // Report the worst equality rows for diagnosis.
        std::vector<std::pair<double, size_t>> worst;
        for (size_t r = 0; r < compiled.sdp.equalities.size(); ++r) {
          double v = -compiled.sdp.equalities[r].rhs;
          for (const auto& [var, cf] : compiled.sdp.equalities[r].terms) v += cf * sol.y[var];
          worst.emplace_back(std::abs(v), r);
        }
        std::sort(worst.rbegin(), worst.rend());
        for (size_t i = 0; i < std::min<size_t>(3, worst.size()); ++i)
          std::cerr << "    residual " << worst[i].first << " at "
                    << compiled.row_labels[worst[i].second] << "\n";
      }
    }
    if (sol.status != SdpStatus::Optimal) return {false, 0.0};
    const double margin = a.margin >= 0 ? compiled.handle_value(a.margin, sol.y) : 0.0;
    if (margin < cfg_.margin_accept) return {false, margin};
    decompile_into(phase, a, compiled, sol.y, gamma, snap);
    return {true, margin};
  }

  Certificate run() {
    const double t0 = now_sec();
    Certificate snap = initial_snapshot();

    double prev_gamma = 0.0;
    int small_improvements = 0;
    for (int j = 1; j <= cfg_.n_iter; ++j) {
      IterationRecord rec;
      rec.index = j;
      const double tj = now_sec();

      auto [gamma_j, probes, ok] = gamma_step(j == 1, prev_gamma, snap);
      rec.gamma_probes = probes;
      if (!ok) {
        if (j == 1) report_iteration1_failure(snap);
        rec.gamma = prev_gamma;
        rec.wall_sec = now_sec() - tj;
        snap.history.push_back(rec);
        break;  // cannot certify the previous gamma again: stop with last snapshot
      }
      rec.gamma = gamma_j;
      snap.gamma = gamma_j;

      auto [vok, margin] = solve_phase(Phase::VStep, gamma_j, snap);
      rec.v_step_ok = vok;
      rec.margin = margin;
      rec.wall_sec = now_sec() - tj;
      snap.history.push_back(rec);
      if (cfg_.verbose)
        std::cerr << "iteration " << j << ": gamma=" << gamma_j << " v_step="
                  << (vok ? "ok" : "stalled") << "\n";

      const double improvement =
          j == 1 ? 1.0 : (gamma_j - prev_gamma) / std::max(std::abs(prev_gamma), 1e-9);
      prev_gamma = gamma_j;
      if (j > 1 && improvement < cfg_.gamma_rel_tol) {
        if (++small_improvements >= 2) break;
      } else {
        small_improvements = 0;
      }
    }
    snap.total_wall_sec = now_sec() - t0;
    return snap;
  }

  Certificate initial_snapshot() {
    Certificate snap;
    snap.xg_names = E_.xg_names;
    snap.xpsi_names = E_.xpsi_names;
    snap.xt_names = E_.xt_names;
    snap.u_direct_names = E_.u_direct_names;
    snap.horizon = E_.horizon;
    snap.R = E_.R;
    snap.target = E_.target;
    snap.dynamic_controller = E_.actuator_uncertain;
    snap.hardness = iqc_.hardness;
    snap.mkind = iqc_.mset.kind;
    snap.sigma = iqc_.mset.sigma;
    snap.alpha = iqc_.mset.alpha;
    snap.beta = iqc_.mset.beta;
    snap.V = init_V0(E_, iqc_, cfg_);
    snap.Y22 = Eigen::MatrixXd::Zero(E_.n_psi(), E_.n_psi());
    if (iqc_.hardness == Hardness::Soft) {
      // M0: a small D-structured element of the constraint set; Y22_0 comes
      // from the finite-horizon KYP bound so every snapshot is a sound
      // certificate on its own.
      const int r = iqc_.mset.m11_dim;
      const int nz = iqc_.filter.n_z();
      Eigen::MatrixXd M0 = Eigen::MatrixXd::Zero(nz, nz);
      M0.topLeftCorner(r, r) =
          1e-4 * iqc_.mset.sigma * iqc_.mset.sigma * Eigen::MatrixXd::Identity(r, r);
      M0.bottomRightCorner(r, r) = -1e-4 * Eigen::MatrixXd::Identity(r, r);
      snap.M = M0;
      const auto y22 = kyp_find_y22(iqc_, M0, cfg_.solver);
      if (!y22)
        throw std::runtime_error("certify: initial soft multiplier failed the KYP bound");
      snap.Y22 = *y22;
      snap.Y1 = 1e-4 * Eigen::MatrixXd::Identity(iqc_.psi11.n_psi(), iqc_.psi11.n_psi());
    } else if (iqc_.mset.kind == MKind::Sector) {
      snap.M = iqc_.mset.sector_base();
    } else {
      snap.M = Eigen::MatrixXd::Zero(iqc_.filter.n_z(), iqc_.filter.n_z());
    }
    return snap;
  }

  // Bisection for sup gamma; keeps the last feasible probe in `snap`.
  std::tuple<double, int, bool> gamma_step(bool first, double prev_gamma, Certificate& snap) {
    int probes = 0;
    Certificate best = snap;
    auto probe = [&](double g) {
      ++probes;
      Certificate trial = snap;
      const auto [ok, margin] = solve_phase(Phase::Gamma, g, trial);
      if (ok) best = std::move(trial), best.gamma = g;
      return ok;
    };

    double lo, hi;
    if (first) {
      double g = cfg_.init_level;
      bool found = probe(g);
      int guard = 0;
      while (!found && ++guard <= 40) {
        g *= 0.5;
        if (g < 1e-12) break;
        found = probe(g);
      }
      if (!found) return {0.0, probes, false};
      lo = g;
      hi = 2.0 * g;
      while (guard++ <= 60 && probe(hi)) {
        lo = hi;
        hi *= 2.0;
      }
    } else {
      lo = prev_gamma;
      if (!probe(lo)) {
        bool rescued = false;
        for (double shrink : {0.999, 0.99, 0.9}) {
          if (probe(lo * shrink)) {
            lo *= shrink;
            rescued = true;
            break;
          }
        }
        if (!rescued) return {prev_gamma, probes, false};
      }
      double gap = std::max(0.25 * std::abs(lo), 1e-3);
      hi = lo + gap;
      int guard = 0;
      while (guard++ < 8 && probe(hi)) {
        lo = hi;
        gap *= 2.0;
        hi = lo + gap;
      }
    }
    while (hi - lo > cfg_.bisect_rel_tol * std::max(std::abs(lo), 1e-2)) {
      const double mid = 0.5 * (lo + hi);
      (probe(mid) ? lo : hi) = mid;
    }
    snap = best;
    snap.gamma = lo;
    return {lo, probes, true};
  }

  [[noreturn]] void report_iteration1_failure(const Certificate& snap) {
    // Identify the first infeasible constraint family by solving relaxations
    // with single families active.
    std::string family = "unknown";
    const double g = cfg_.init_level;
    const Assembled a = builder_.build(Phase::Gamma, g, snap);
    for (size_t c = 0; c < a.prog.constraints.size(); ++c) {
      SosProgram sub;
      sub.alloc = a.prog.alloc;
      sub.lmis = a.prog.lmis;
      sub.objective = a.prog.objective;
      sub.constraints.push_back(a.prog.constraints[c]);
      CompiledSos compiled = compile(sub);
      const SdpSolution sol = solve(compiled.sdp, cfg_.solver);
      if (sol.status != SdpStatus::Optimal) {
        family = a.prog.constraints[c].name;
        break;
      }
    }
    throw std::runtime_error(
        "certify: iteration-1 infeasibility (first infeasible constraint family: " + family +
        ")");
  }

 private:
  void decompile_into(Phase phase, const Assembled& a, const CompiledSos& compiled,
                      const Eigen::VectorXd& y, double gamma, Certificate& snap) {
    const auto vals = compiled.handle_values(y);
    const Builder& b = builder_;
    auto poly_of = [&](const ParamPolynomial& p) {
      return b.unscaled(p.evaluate_handles(vals).cleaned());
    };

    snap.gamma = gamma;
    if (phase == Phase::VStep) {
      snap.V = poly_of(a.V);
      snap.s0 = poly_of(a.s0);
    } else {
      snap.k_direct.clear();
      for (size_t c = 0; c < a.k_direct.size(); ++c)
        snap.k_direct.push_back(b.sigma(E_.u_direct_names[c]) * poly_of(a.k_direct[c]));
      snap.k_tilde.clear();
      for (size_t k = 0; k < a.k_tilde.size(); ++k)
        snap.k_tilde.push_back(b.sigma(E_.xt_names[k]) * poly_of(a.k_tilde[k]));
      snap.s2 = poly_of(a.s2);
      snap.s5.clear();
      for (const auto& s : a.s5) snap.s5.push_back(poly_of(s));
    }
    snap.s1 = poly_of(a.s1);
    snap.s3 = poly_of(a.s3);
    snap.s4.clear();
    for (const auto& s : a.s4) snap.s4.push_back(poly_of(s));
    snap.s6.clear();
    for (const auto& s : a.s6) snap.s6.push_back(poly_of(s));

    // Multiplier matrix data (already in original coordinates: the scaled z
    // rows absorb the coordinate change).
    const MSet& ms = iqc_.mset;
    if (ms.kind == MKind::Sector) {
      snap.lambda = poly_of(a.lambda);
      snap.M = ms.sector_base();
    } else if (ms.kind == MKind::NLgain && a.nl_lambda >= 0) {
      const double lam = vals.at(a.nl_lambda);
      const int nv = ms.n_v, nw = ms.n_w;
      snap.M = Eigen::MatrixXd::Zero(nv + nw, nv + nw);
      snap.M.topLeftCorner(nv, nv) = ms.sigma * ms.sigma * lam *
                                     Eigen::MatrixXd::Identity(nv, nv);
      snap.M.bottomRightCorner(nw, nw) = -lam * Eigen::MatrixXd::Identity(nw, nw);
    } else if ((ms.kind == MKind::D || ms.kind == MKind::DG) && !a.m11.empty()) {
      const int r = ms.m11_dim;
      Eigen::MatrixXd M11 = Eigen::MatrixXd::Zero(r, r);
      int idx = 0;
      for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) M11(i, j) = M11(j, i) = vals.at(a.m11[idx++]);
      Eigen::MatrixXd M12 = Eigen::MatrixXd::Zero(r, r);
      idx = 0;
      for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) {
          M12(i, j) = vals.at(a.m12[idx]);
          M12(j, i) = -vals.at(a.m12[idx]);
          ++idx;
        }
      snap.M = Eigen::MatrixXd::Zero(2 * r, 2 * r);
      snap.M.topLeftCorner(r, r) = ms.sigma * ms.sigma * M11;
      snap.M.topRightCorner(r, r) = M12;
      snap.M.bottomLeftCorner(r, r) = M12.transpose();
      snap.M.bottomRightCorner(r, r) = -M11;
    }
    if (!a.y22.empty()) {
      const int n = E_.n_psi();
      Eigen::MatrixXd Y22 = Eigen::MatrixXd::Zero(n, n);
      int idx = 0;
      for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q) Y22(p, q) = Y22(q, p) = vals.at(a.y22[idx++]);
      snap.Y22 = Y22;
    }
    if (!a.y1.empty()) {
      const int n1 = iqc_.psi11.n_psi();
      Eigen::MatrixXd Y1 = Eigen::MatrixXd::Zero(n1, n1);
      int idx = 0;
      for (int p = 0; p < n1; ++p)
        for (int q = p; q < n1; ++q) Y1(p, q) = Y1(q, p) = vals.at(a.y1[idx++]);
      snap.Y1 = Y1;
    }
  }

  const ExtendedSystem& E_;
  const IqcSpec& iqc_;
  const SynthesisConfig& cfg_;
  Builder builder_;
};

}  // namespace

Certificate iterate(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg) {
  Engine engine(E, iqc, cfg);
  return engine.run();
}

std::string diagnose_feasibility(const ExtendedSystem& E, const IqcSpec& iqc,
                                 const SynthesisConfig& cfg, const Polynomial& V_fixed,
                                 double gamma) {
  Engine engine(E, iqc, cfg);
  Certificate snap = engine.initial_snapshot();
  snap.V = V_fixed;
  Builder builder(E, iqc, cfg);
  const Assembled a = builder.build(Phase::Gamma, gamma, snap);
  std::ostringstream os;
  for (size_t mask = 1; mask <= a.prog.constraints.size(); ++mask) {
    // Cumulative prefixes: family 1, families 1-2, ...
    SosProgram sub;
    sub.alloc = a.prog.alloc;
    sub.lmis = a.prog.lmis;
    for (size_t c = 0; c < mask; ++c) sub.constraints.push_back(a.prog.constraints[c]);
    CompiledSos compiled = compile(sub);
    const SdpSolution sol = solve(compiled.sdp, cfg.solver);
    os << "through '" << a.prog.constraints[mask - 1].name << "': " << to_string(sol.status)
       << " (iters " << sol.iterations << ")\n";
  }
  return os.str();
}

GammaStepResult gamma_step(const ExtendedSystem& E, const IqcSpec& iqc,
                           const SynthesisConfig& cfg, const Polynomial& V_fixed,
                           const Eigen::MatrixXd& M_fixed, const Eigen::MatrixXd& Y22_fixed) {
  Engine engine(E, iqc, cfg);
  GammaStepResult res;
  res.snapshot = engine.initial_snapshot();
  res.snapshot.V = V_fixed;
  if (M_fixed.size()) res.snapshot.M = M_fixed;
  if (Y22_fixed.size()) res.snapshot.Y22 = Y22_fixed;
  auto [gamma, probes, ok] = engine.gamma_step(/*first=*/true, 0.0, res.snapshot);
  res.ok = ok;
  res.gamma = gamma;
  res.probes = probes;
  return res;
}

VStepResult v_step(const ExtendedSystem& E, const IqcSpec& iqc, const SynthesisConfig& cfg,
                   const Certificate& from, double gamma) {
  Engine engine(E, iqc, cfg);
  VStepResult res;
  res.snapshot = from;
  auto [ok, margin] = engine.solve_phase(Phase::VStep, gamma, res.snapshot);
  res.ok = ok;
  res.margin = margin;
  if (ok) res.snapshot.gamma = gamma;
  return res;
}

CertifyStatus reverify(const ExtendedSystem& E, const IqcSpec& iqc, const Certificate& cert,
                       double tol) {
  SynthesisConfig cfg;
  cfg.epsilon_s3 = 0.0;  // the stored s3 already includes its offset
  Builder builder(E, iqc, cfg);
  const Assembled a = builder.build(Phase::Audit, cert.gamma, cert);
  CertifyStatus st;
  for (const auto& [name, expr] : a.audit_exprs) {
    const SosCheckResult chk = check_sos(expr, tol);
    if (!chk.is_sos) {
      st.message = "constraint '" + name + "' failed check_sos: " + chk.message;
      return st;
    }
  }
  // Multiplier polynomials must be SOS themselves (checked in the scaled
  // coordinates, which is equivalent and better conditioned).
  std::vector<std::pair<std::string, Polynomial>> sos_polys = {
      {"s1", cert.s1}, {"s2", cert.s2}, {"s3 - eps", cert.s3 - Polynomial(1e-6, cert.s3.vars())}};
  for (size_t i = 0; i < cert.s4.size(); ++i) sos_polys.emplace_back("s4", cert.s4[i]);
  for (size_t i = 0; i < cert.s5.size(); ++i) sos_polys.emplace_back("s5", cert.s5[i]);
  for (size_t i = 0; i < cert.s6.size(); ++i) sos_polys.emplace_back("s6", cert.s6[i]);
  if (cert.mkind == MKind::Sector) sos_polys.emplace_back("lambda", cert.lambda);
  for (const auto& [name, p] : sos_polys) {
    const SosCheckResult chk = check_sos(builder.scaled(p), tol);
    if (!chk.is_sos) {
      st.message = "multiplier '" + name + "' failed check_sos: " + chk.message;
      return st;
    }
  }
  // Matrix side conditions.
  if (cert.hardness == Hardness::Soft) {
    const Eigen::MatrixXd K = kyp_matrix(cert.Y22, iqc.filter, cert.M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().maxCoeff() > -1e-9) {
      st.message = "soft certificate: KYP(Y22, M) is not strictly negative";
      return st;
    }
  }
  if (cert.mkind == MKind::D) {
    const int r = iqc.mset.m11_dim;
    const Eigen::MatrixXd M11 = -cert.M.bottomRightCorner(r, r);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M11, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) {
      st.message = "hard D certificate: M11 not positive semidefinite";
      return st;
    }
  }
  if (cert.mkind == MKind::NLgain && cert.M.rows() > 0 && cert.M(0, 0) < -tol) {
    st.message = "nl-gain certificate: negative lambda";
    return st;
  }
  st.ok = true;
  st.message = "all constraint families re-verified";
  return st;
}

}  // namespace brs
