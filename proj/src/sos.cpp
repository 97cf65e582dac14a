#include "brs/sos.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace brs {

namespace {
constexpr double kSqrt1_2 = 0.70710678118654752;
constexpr double kSqrt2 = 1.4142135623730951;
}  // namespace

// ---- ParamPolynomial ------------------------------------------------------

ParamPolynomial ParamPolynomial::free_poly(const VarSetPtr& vars, int degree,
                                           HandleAllocator& alloc) {
  ParamPolynomial p{Polynomial(vars)};
  for (const Monomial& m : gram_basis(vars, 2 * degree)) {
    Polynomial mono(vars);
    mono.add_term(m, 1.0);
    p.basis_.emplace(alloc.fresh(), mono);
  }
  return p;
}

ParamPolynomial ParamPolynomial::scalar_handle(Handle h, const Polynomial& coeff) {
  ParamPolynomial p{Polynomial(coeff.vars())};
  if (!coeff.is_zero()) p.basis_.emplace(h, coeff);
  return p;
}

void ParamPolynomial::add_handle_term(Handle h, const Polynomial& coeff) {
  if (coeff.is_zero()) return;
  auto [it, inserted] = basis_.emplace(h, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second.is_zero()) basis_.erase(it);
  }
}

ParamPolynomial ParamPolynomial::operator-() const {
  ParamPolynomial r{-fixed_};
  for (const auto& [h, p] : basis_) r.basis_.emplace(h, -p);
  return r;
}

ParamPolynomial operator+(const ParamPolynomial& a, const ParamPolynomial& b) {
  ParamPolynomial r{a.fixed_ + b.fixed_};
  r.basis_ = a.basis_;
  for (const auto& [h, p] : b.basis_) r.add_handle_term(h, p);
  return r;
}

ParamPolynomial operator-(const ParamPolynomial& a, const ParamPolynomial& b) {
  return a + (-b);
}

ParamPolynomial operator*(const Polynomial& p, const ParamPolynomial& a) {
  ParamPolynomial r{p * a.fixed_};
  for (const auto& [h, q] : a.basis_) {
    Polynomial pq = p * q;
    if (!pq.is_zero()) r.basis_.emplace(h, std::move(pq));
  }
  return r;
}

ParamPolynomial operator*(double s, const ParamPolynomial& a) {
  ParamPolynomial r{s * a.fixed_};
  if (s == 0.0) return r;
  for (const auto& [h, q] : a.basis_) r.basis_.emplace(h, s * q);
  return r;
}

ParamPolynomial ParamPolynomial::differentiate(const std::string& var) const {
  ParamPolynomial r{fixed_.vars()->contains(var) ? fixed_.differentiate(var)
                                                 : Polynomial(fixed_.vars())};
  for (const auto& [h, q] : basis_) {
    if (!q.vars()->contains(var)) continue;
    Polynomial dq = q.differentiate(var);
    if (!dq.is_zero()) r.basis_.emplace(h, std::move(dq));
  }
  return r;
}

ParamPolynomial ParamPolynomial::substitute(
    const std::vector<std::pair<std::string, Polynomial>>& bindings) const {
  std::vector<std::pair<std::string, Polynomial>> b = bindings;
  ParamPolynomial r{fixed_.substitute(b)};
  for (const auto& [h, q] : basis_) {
    Polynomial sq = q.substitute(b);
    if (!sq.is_zero()) r.basis_.emplace(h, std::move(sq));
  }
  return r;
}

Polynomial ParamPolynomial::evaluate_handles(const std::map<Handle, double>& values) const {
  Polynomial out = fixed_;
  for (const auto& [h, q] : basis_) {
    auto it = values.find(h);
    if (it == values.end())
      throw std::invalid_argument("evaluate_handles: missing handle " + std::to_string(h));
    out += it->second * q;
  }
  return out;
}

int ParamPolynomial::max_degree() const {
  int d = fixed_.is_zero() ? 0 : fixed_.degree();
  for (const auto& [h, q] : basis_)
    if (!q.is_zero()) d = std::max(d, q.degree());
  return d;
}

VarSetPtr ParamPolynomial::all_vars() const {
  VarSetPtr v = fixed_.vars();
  for (const auto& [h, q] : basis_) v = union_vars(v, q.vars());
  return v;
}

// ---- gram basis -----------------------------------------------------------

namespace {

void enumerate_monomials(int nvars, int max_degree, std::vector<Monomial>& out) {
  Monomial m{std::vector<int>(nvars, 0)};
  // depth-first over exponent vectors with a degree budget
  std::function<void(int, int)> rec = [&](int var, int budget) {
    if (var == nvars) {
      out.push_back(m);
      return;
    }
    for (int e = 0; e <= budget; ++e) {
      m.exp[var] = e;
      rec(var + 1, budget - e);
    }
    m.exp[var] = 0;
  };
  rec(0, max_degree);
  std::sort(out.begin(), out.end(), GradedLexLess{});
}

}  // namespace

std::vector<Monomial> gram_basis(const VarSetPtr& vars, int degree) {
  if (degree < 0 || degree % 2 != 0)
    throw std::invalid_argument(
        "gram_basis: degree must be even and nonnegative (an odd-degree polynomial cannot be a "
        "sum of squares)");
  std::vector<Monomial> out;
  enumerate_monomials(vars->size(), degree / 2, out);
  return out;
}

// ---- SOS decision polynomials ----------------------------------------------

ParamPolynomial SosProgram::new_sos_poly(const VarSetPtr& vars, int degree,
                                         const std::string& name) {
  if (degree < 0) throw std::invalid_argument("new_sos_poly: negative degree");
  const std::vector<Monomial> basis = gram_basis(vars, 2 * ((degree + 1) / 2));
  const int B = static_cast<int>(basis.size());
  HandleLmi lmi;
  lmi.name = name + "_gram";
  lmi.dim = B;
  ParamPolynomial poly{Polynomial(vars)};
  std::vector<Polynomial> mono(B, Polynomial(vars));
  for (int i = 0; i < B; ++i) mono[i].add_term(basis[i], 1.0);
  lmi.coeffs.reserve(static_cast<size_t>(B) * (B + 1) / 2);
  for (int j = 0; j < B; ++j) {
    for (int i = j; i < B; ++i) {
      const Handle h = alloc.fresh();
      if (i == j) {
        lmi.coeffs.push_back({h, {{i, i, 1.0}}});
        poly.add_handle_term(h, mono[i] * mono[i]);
      } else {
        lmi.coeffs.push_back({h, {{i, j, kSqrt1_2}}});
        poly.add_handle_term(h, kSqrt2 * (mono[i] * mono[j]));
      }
    }
  }
  lmis.push_back(std::move(lmi));
  return poly;
}

void HandleLmi::add_coeff(Handle h, int r, int c, double v) {
  if (v == 0.0) return;
  if (r < c) std::swap(r, c);
  for (auto& [hh, trips] : coeffs) {
    if (hh == h) {
      trips.push_back({r, c, v});
      return;
    }
  }
  coeffs.push_back({h, {{r, c, v}}});
}

// ---- compilation ----------------------------------------------------------

namespace {

struct SupportInfo {
  std::set<Monomial, GradedLexLess> monomials;
  int min_deg = INT_MAX;
  int max_deg = -1;
  std::vector<int> min_exp, max_exp;
};

void scan_support(const Polynomial& p, bool fixed_part, SupportInfo& info, int* fixed_max) {
  for (const auto& [m, c] : p.terms()) {
    info.monomials.insert(m);
    const int d = m.degree();
    info.min_deg = std::min(info.min_deg, d);
    info.max_deg = std::max(info.max_deg, d);
    for (size_t v = 0; v < m.exp.size(); ++v) {
      info.min_exp[v] = std::min(info.min_exp[v], m.exp[v]);
      info.max_exp[v] = std::max(info.max_exp[v], m.exp[v]);
    }
    if (fixed_part && d > *fixed_max) *fixed_max = d;
  }
}

}  // namespace

CompiledSos compile(const SosProgram& program) {
  CompiledSos out;
  SdpProblem& sdp = out.sdp;

  const int H = program.alloc.next;
  sdp.add_variables(H);
  out.handle_to_y.resize(H);
  for (int h = 0; h < H; ++h) out.handle_to_y[h] = h;

  for (const auto& con : program.constraints) {
    GramInfo info;
    info.name = con.name;
    info.vars = con.vars;
    info.margin_handle = con.margin_handle;

    // Re-express every piece over the constrained variables; a variable that
    // actually appears outside the set is a modeling error.
    Polynomial fixed;
    std::vector<std::pair<Handle, Polynomial>> hterms;
    try {
      fixed = con.expression.fixed().with_vars(con.vars);
      for (const auto& [h, q] : con.expression.basis())
        if (!q.is_zero()) hterms.emplace_back(h, q.with_vars(con.vars));
    } catch (const std::out_of_range& e) {
      throw std::invalid_argument("SOS constraint '" + con.name + "': " + e.what());
    }

    const int nv = con.vars->size();
    SupportInfo sup;
    sup.min_exp.assign(nv, INT_MAX);
    sup.max_exp.assign(nv, 0);
    int fixed_max = -1;
    scan_support(fixed, true, sup, &fixed_max);
    for (const auto& [h, q] : hterms) scan_support(q, false, sup, &fixed_max);

    if (sup.monomials.empty() && !con.margin_handle) continue;  // 0 in Sigma
    if (sup.monomials.empty()) {
      sup.min_deg = sup.max_deg = 0;
      sup.min_exp.assign(nv, 0);
    }

    if (sup.max_deg % 2 != 0 && fixed_max == sup.max_deg)
      throw std::invalid_argument("SOS constraint '" + con.name +
                                  "': expression has fixed odd top degree " +
                                  std::to_string(sup.max_deg));

    double scale = std::max(fixed.max_abs_coeff(), 0.0);
    for (const auto& [h, q] : hterms) scale = std::max(scale, q.max_abs_coeff());
    scale = scale > 0 ? 1.0 / scale : 1.0;
    info.scale = scale;

    // Gram basis: total-degree enumeration, then the bounding-box Newton
    // polytope cut (valid since New(q_i) lies in half the Newton polytope of
    // the expression), and the diagonal-consistency reduction.
    std::vector<Monomial> basis;
    enumerate_monomials(nv, sup.max_deg / 2, basis);
    const int min_half = (sup.min_deg + 1) / 2;
    basis.erase(std::remove_if(basis.begin(), basis.end(),
                               [&](const Monomial& m) {
                                 if (m.degree() < min_half) return true;
                                 for (int v = 0; v < nv; ++v) {
                                   if (m.exp[v] > sup.max_exp[v] / 2) return true;
                                   if (m.exp[v] < (sup.min_exp[v] + 1) / 2) return true;
                                 }
                                 return false;
                               }),
                basis.end());

    // Iterated diagonal consistency: drop every basis monomial whose square
    // is outside the support and reachable by no other basis pair.
    for (bool changed = true; changed;) {
      changed = false;
      std::map<Monomial, int, GradedLexLess> pair_count;
      for (size_t a = 0; a < basis.size(); ++a)
        for (size_t b = a; b < basis.size(); ++b) {
          Monomial s = basis[a];
          for (int v = 0; v < nv; ++v) s.exp[v] += basis[b].exp[v];
          ++pair_count[s];
        }
      std::vector<Monomial> kept;
      kept.reserve(basis.size());
      for (const auto& alpha : basis) {
        Monomial sq = alpha;
        for (int v = 0; v < nv; ++v) sq.exp[v] *= 2;
        if (!sup.monomials.count(sq) && pair_count[sq] == 1) {
          changed = true;
        } else {
          kept.push_back(alpha);
        }
      }
      basis = std::move(kept);
    }

    if (basis.empty()) {
      bool nonzero_fixed = !fixed.is_zero();
      if (nonzero_fixed)
        throw std::invalid_argument("SOS constraint '" + con.name +
                                    "': empty Gram basis for a nonzero expression");
      // Handles must all vanish: emit the zero-matching rows below with an
      // empty Gram sum.
    }

    const int B = static_cast<int>(basis.size());
    info.basis = basis;
    info.y_start = sdp.num_vars;
    const int y0 = sdp.add_variables(B * (B + 1) / 2);
    SdpBlock& blk = sdp.add_block(B);
    blk.coeffs.reserve(static_cast<size_t>(B) * (B + 1) / 2);
    {
      int pos = 0;
      for (int j = 0; j < B; ++j)
        for (int i = j; i < B; ++i, ++pos)
          blk.coeffs.push_back({y0 + pos, {{i, j, i == j ? 1.0 : kSqrt1_2}}});
    }

    // Coefficient matching per monomial: Gram side minus scaled handle side
    // equals the scaled fixed side.
    std::map<Monomial, LinearRow, GradedLexLess> rows;
    {
      int pos = 0;
      for (int j = 0; j < B; ++j) {
        for (int i = j; i < B; ++i, ++pos) {
          Monomial s = basis[i];
          for (int v = 0; v < nv; ++v) s.exp[v] += basis[j].exp[v];
          rows[s].terms.emplace_back(y0 + pos, i == j ? 1.0 : kSqrt2);
        }
      }
    }
    for (const auto& m : sup.monomials) rows[m];  // ensure a row exists
    for (const auto& [m, c] : fixed.terms()) rows[m].rhs += scale * c;
    for (const auto& [h, q] : hterms)
      for (const auto& [m, c] : q.terms())
        rows[m].terms.emplace_back(out.handle_to_y[h], -scale * c);
    if (con.margin_handle) {
      for (const auto& alpha : basis) {
        Monomial sq = alpha;
        for (int v = 0; v < nv; ++v) sq.exp[v] *= 2;
        rows[sq].terms.emplace_back(out.handle_to_y[*con.margin_handle], scale);
      }
    }
    for (auto& [m, row] : rows) {
      Polynomial mono(con.vars);
      mono.add_term(m, 1.0);
      out.row_labels.push_back(con.name + ":" + to_string(mono));
      sdp.add_equality(std::move(row));
    }
    out.grams.push_back(std::move(info));
  }

  for (const auto& lmi : program.lmis) {
    SdpBlock& blk = sdp.add_block(lmi.dim);
    blk.constant = lmi.constant;
    for (const auto& [h, trips] : lmi.coeffs) {
      for (const auto& t : trips) blk.add_coeff(out.handle_to_y[h], t.row, t.col, t.value);
    }
  }

  for (const auto& eq : program.equalities) {
    LinearRow row;
    row.rhs = eq.rhs;
    for (const auto& [h, c] : eq.terms) row.terms.emplace_back(out.handle_to_y[h], c);
    out.row_labels.push_back("handle_equality");
    sdp.add_equality(std::move(row));
  }

  for (const auto& [h, c] : program.objective) sdp.add_objective(out.handle_to_y[h], c);
  return out;
}

double CompiledSos::handle_value(Handle h, const Eigen::VectorXd& y) const {
  return y[handle_to_y.at(h)];
}

std::map<Handle, double> CompiledSos::handle_values(const Eigen::VectorXd& y) const {
  std::map<Handle, double> vals;
  for (size_t h = 0; h < handle_to_y.size(); ++h)
    vals[static_cast<Handle>(h)] = y[handle_to_y[h]];
  return vals;
}

Eigen::MatrixXd CompiledSos::gram(int constraint_index, const Eigen::VectorXd& y) const {
  const GramInfo& g = grams.at(constraint_index);
  const int B = static_cast<int>(g.basis.size());
  Eigen::MatrixXd Q(B, B);
  int pos = 0;
  for (int j = 0; j < B; ++j) {
    for (int i = j; i < B; ++i, ++pos) {
      const double v = y[g.y_start + pos] * (i == j ? 1.0 : kSqrt1_2);
      Q(i, j) = Q(j, i) = v;
    }
  }
  return Q / g.scale;
}

Polynomial CompiledSos::reconstruct(int constraint_index, const Eigen::VectorXd& y) const {
  const GramInfo& g = grams.at(constraint_index);
  const Eigen::MatrixXd Q = gram(constraint_index, y);
  const int B = static_cast<int>(g.basis.size());
  const int nv = g.vars->size();
  Polynomial p(g.vars);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < B; ++j) {
      Monomial m = g.basis[i];
      for (int v = 0; v < nv; ++v) m.exp[v] += g.basis[j].exp[v];
      p.add_term(m, Q(i, j));
    }
  }
  return p;
}

SosCheckResult check_sos(const Polynomial& p, double tol, const SolverOptions& opts) {
  SosCheckResult res;
  if (p.is_zero()) {
    res.is_sos = true;
    res.message = "zero polynomial";
    return res;
  }
  if (p.degree() % 2 != 0) {
    res.is_sos = false;
    res.message = "odd degree";
    return res;
  }
  SosProgram prog;
  prog.constraints.push_back({"check_sos", ParamPolynomial(p), p.vars(), std::nullopt});
  CompiledSos compiled;
  try {
    compiled = compile(prog);
  } catch (const std::invalid_argument& e) {
    res.is_sos = false;
    res.message = e.what();
    return res;
  }
  const SdpSolution sol = solve(compiled.sdp, opts);
  if (sol.status == SdpStatus::Infeasible) {
    res.is_sos = false;
    res.message = "solver infeasibility certificate";
    return res;
  }
  if (sol.status != SdpStatus::Optimal)
    throw std::runtime_error("check_sos: solver failure (" + to_string(sol.status) + ")");
  res.basis = compiled.grams[0].basis;
  res.gram = compiled.gram(0, sol.y);
  const Polynomial diff = compiled.reconstruct(0, sol.y) - p;
  res.coeff_residual = diff.max_abs_coeff();
  if (res.gram.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.gram, Eigen::EigenvaluesOnly);
    res.min_eig = es.eigenvalues().minCoeff();
  }
  res.is_sos = res.coeff_residual <= tol && res.min_eig >= -tol;
  if (!res.is_sos) res.message = "certificate audit failed at tolerance";
  return res;
}

}  // namespace brs
