#include "brs/system.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace brs {

namespace {

std::vector<std::string> psi_state_names(int n_psi, const std::set<std::string>& taken) {
  std::vector<std::string> names;
  for (int i = 1; i <= n_psi; ++i) {
    const std::string name = "xp" + std::to_string(i);
    if (taken.count(name))
      throw std::invalid_argument("variable name '" + name + "' is reserved for filter states");
    names.push_back(name);
  }
  return names;
}

void check_dims(const NominalSystem& G, const IqcSpec& iqc) {
  if (G.n_v() != iqc.filter.n_v())
    throw std::invalid_argument("extend: h has " + std::to_string(G.n_v()) +
                                " rows but the filter expects n_v = " +
                                std::to_string(iqc.filter.n_v()));
  if (G.n_w() != iqc.filter.n_w())
    throw std::invalid_argument("extend: plant declares n_w = " + std::to_string(G.n_w()) +
                                " but the filter expects n_w = " +
                                std::to_string(iqc.filter.n_w()));
  if (G.f.rows() != G.n_G() || G.g.rows() != G.n_G() || G.g.cols() != G.n_u())
    throw std::invalid_argument("extend: f/g dimensions inconsistent with declarations");
  if (!iqc.filter.is_hurwitz())
    throw std::invalid_argument("extend: filter A matrix is not Hurwitz");
}

// Shared assembly once h has been made control-free (h_sub) and the x~
// substitutions applied to the plant input map.
ExtendedSystem assemble(const NominalSystem& G, const IqcSpec& iqc,
                        const std::vector<int>& perturbed,
                        const std::vector<Polynomial>& f_plant_rows,
                        const std::vector<Polynomial>& h_rows,
                        const std::vector<std::string>& xt_names) {
  ExtendedSystem E;
  E.xg_names = G.state_names;
  const int n_psi = iqc.filter.n_psi();
  std::set<std::string> taken(G.state_names.begin(), G.state_names.end());
  for (const auto& n : G.control_names) taken.insert(n);
  for (const auto& n : G.dist_names) taken.insert(n);
  for (const auto& n : G.w_names) taken.insert(n);
  E.xpsi_names = psi_state_names(n_psi, taken);
  E.xt_names = xt_names;
  E.perturbed_channels = perturbed;
  for (int j = 0; j < G.n_u(); ++j)
    if (std::find(perturbed.begin(), perturbed.end(), j) == perturbed.end())
      E.direct_channels.push_back(j);
  for (int j : E.direct_channels) E.u_direct_names.push_back(G.control_names[j]);
  E.w_names = G.w_names;
  E.d_names = G.dist_names;
  E.actuator_uncertain = !perturbed.empty();

  std::vector<std::string> names = E.xg_names;
  names.insert(names.end(), E.xpsi_names.begin(), E.xpsi_names.end());
  names.insert(names.end(), E.xt_names.begin(), E.xt_names.end());
  names.insert(names.end(), E.u_direct_names.begin(), E.u_direct_names.end());
  names.insert(names.end(), E.w_names.begin(), E.w_names.end());
  names.insert(names.end(), E.d_names.begin(), E.d_names.end());
  E.vars = make_vars(names);

  const int n_x = G.n_G() + n_psi;
  E.f_ext = PolynomialMatrix(n_x, 1, E.vars);
  E.g_ext = PolynomialMatrix(n_x, static_cast<int>(E.direct_channels.size()), E.vars);
  for (int i = 0; i < G.n_G(); ++i) {
    E.f_ext.set(i, 0, f_plant_rows[i]);
    for (size_t c = 0; c < E.direct_channels.size(); ++c)
      E.g_ext.set(i, static_cast<int>(c), G.g.at(i, E.direct_channels[c]));
  }
  // Filter rows: A x_psi + B1 h + B2 w.
  for (int i = 0; i < n_psi; ++i) {
    Polynomial row(E.vars);
    for (int j = 0; j < n_psi; ++j)
      row += iqc.filter.A(i, j) * Polynomial::variable(E.xpsi_names[j], E.vars);
    for (int j = 0; j < G.n_v(); ++j)
      row += iqc.filter.B1(i, j) * h_rows[j].with_vars(E.vars);
    for (int j = 0; j < G.n_w(); ++j)
      row += iqc.filter.B2(i, j) * Polynomial::variable(E.w_names[j], E.vars);
    E.f_ext.set(G.n_G() + i, 0, row);
  }
  E.h_sub = PolynomialMatrix(G.n_v(), 1, E.vars);
  for (int i = 0; i < G.n_v(); ++i) E.h_sub.set(i, 0, h_rows[i].with_vars(E.vars));
  // z = C x_psi + D1 h + D2 w.
  const int n_z = iqc.filter.n_z();
  E.H = PolynomialMatrix(n_z, 1, E.vars);
  for (int i = 0; i < n_z; ++i) {
    Polynomial row(E.vars);
    for (int j = 0; j < n_psi; ++j)
      row += iqc.filter.C(i, j) * Polynomial::variable(E.xpsi_names[j], E.vars);
    for (int j = 0; j < G.n_v(); ++j)
      row += iqc.filter.D1(i, j) * h_rows[j].with_vars(E.vars);
    for (int j = 0; j < G.n_w(); ++j)
      row += iqc.filter.D2(i, j) * Polynomial::variable(E.w_names[j], E.vars);
    E.H.set(i, 0, row);
  }
  E.P = G.P;
  E.b = G.b;
  E.R = G.R;
  E.target = G.target;
  E.horizon = G.horizon;
  return E;
}

}  // namespace

ExtendedSystem extend(const NominalSystem& G, const IqcSpec& iqc) {
  check_dims(G, iqc);
  for (int i = 0; i < G.n_v(); ++i)
    for (const auto& u : G.control_names)
      if (G.h.at(i, 0).vars()->contains(u) && G.h.at(i, 0).degree_in(G.h.at(i, 0).vars()->index_of(u)) > 0)
        throw std::invalid_argument(
            "extend: h depends on control '" + u +
            "'; use augment_actuator for actuator-uncertain channels");
  std::vector<Polynomial> f_rows, h_rows;
  for (int i = 0; i < G.n_G(); ++i) f_rows.push_back(G.f.at(i, 0));
  for (int i = 0; i < G.n_v(); ++i) h_rows.push_back(G.h.at(i, 0));
  return assemble(G, iqc, {}, f_rows, h_rows, {});
}

ExtendedSystem augment_actuator(const NominalSystem& G, const IqcSpec& iqc,
                                const std::vector<int>& channels) {
  check_dims(G, iqc);
  if (channels.empty())
    throw std::invalid_argument("augment_actuator: empty channel set (use extend instead)");
  std::set<int> seen;
  for (int ch : channels) {
    if (ch < 0 || ch >= G.n_u())
      throw std::invalid_argument("augment_actuator: channel index out of range");
    if (!seen.insert(ch).second)
      throw std::invalid_argument("augment_actuator: duplicate channel");
  }

  std::vector<std::string> xt_names;
  std::vector<std::pair<std::string, Polynomial>> subs;
  VarSetPtr xt_vars;
  {
    std::vector<std::string> names;
    for (size_t k = 0; k < channels.size(); ++k) names.push_back("xt" + std::to_string(k + 1));
    xt_names = names;
    xt_vars = make_vars(names);
    for (size_t k = 0; k < channels.size(); ++k)
      subs.emplace_back(G.control_names[channels[k]],
                        Polynomial::variable(xt_names[k], xt_vars));
  }

  // Plant rows: f + sum over perturbed channels of g_col * x~.
  std::vector<Polynomial> f_rows;
  for (int i = 0; i < G.n_G(); ++i) {
    Polynomial row = G.f.at(i, 0);
    for (size_t k = 0; k < channels.size(); ++k)
      row += G.g.at(i, channels[k]) * Polynomial::variable(xt_names[k], xt_vars);
    f_rows.push_back(row);
  }
  // v = h with the commanded input substituted by x~.
  std::vector<Polynomial> h_rows;
  for (int i = 0; i < G.n_v(); ++i) h_rows.push_back(G.h.at(i, 0).substitute(subs));

  return assemble(G, iqc, channels, f_rows, h_rows, xt_names);
}

std::vector<ExtendedSystem::PolytopeRow> ExtendedSystem::polytope_rows() const {
  std::vector<PolytopeRow> rows;
  for (int i = 0; i < P.rows(); ++i) {
    PolytopeRow row;
    row.bound = b(i);
    for (size_t c = 0; c < direct_channels.size(); ++c)
      if (P(i, direct_channels[c]) != 0.0)
        row.direct.emplace_back(static_cast<int>(c), P(i, direct_channels[c]));
    for (size_t k = 0; k < perturbed_channels.size(); ++k)
      if (P(i, perturbed_channels[k]) != 0.0)
        row.perturbed.emplace_back(static_cast<int>(k), P(i, perturbed_channels[k]));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> equilibrium(const NominalSystem& G,
                                                        const Eigen::VectorXd& x_guess,
                                                        const Eigen::VectorXd& u_guess,
                                                        const std::vector<Polynomial>& trims) {
  const int n = G.n_G(), m = G.n_u();
  if (x_guess.size() != n || u_guess.size() != m)
    throw std::invalid_argument("equilibrium: guess dimension mismatch");

  std::vector<Polynomial> residual_rows;
  for (int i = 0; i < n; ++i) {
    Polynomial row = G.f.at(i, 0);
    for (int j = 0; j < m; ++j)
      row += G.g.at(i, j) * Polynomial::variable(G.control_names[j], G.f.vars());
    residual_rows.push_back(std::move(row));
  }
  for (const auto& trim : trims) residual_rows.push_back(trim.with_vars(G.f.vars()));
  const int nr = static_cast<int>(residual_rows.size());

  auto value_map = [&](const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) -> std::unordered_map<std::string, double> {
    std::unordered_map<std::string, double> vals;
    for (int i = 0; i < n; ++i) vals[G.state_names[i]] = x[i];
    for (int j = 0; j < m; ++j) vals[G.control_names[j]] = u[j];
    for (const auto& name : G.dist_names) vals[name] = 0.0;
    for (const auto& name : G.w_names) vals[name] = 0.0;
    return vals;
  };

  Eigen::VectorXd x = x_guess, u = u_guess;
  for (int iter = 0; iter < 100; ++iter) {
    const auto vals = value_map(x, u);
    Eigen::VectorXd r(nr);
    Eigen::MatrixXd J(nr, n + m);
    for (int i = 0; i < nr; ++i) {
      r[i] = residual_rows[i].evaluate(vals);
      for (int j = 0; j < n; ++j)
        J(i, j) = residual_rows[i].differentiate(G.state_names[j]).evaluate(vals);
      for (int j = 0; j < m; ++j)
        J(i, n + j) = residual_rows[i].differentiate(G.control_names[j]).evaluate(vals);
    }
    if (r.lpNorm<Eigen::Infinity>() <= 1e-10) return {x, u};
    const Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-r);
    x += step.head(n);
    u += step.tail(m);
  }
  throw std::runtime_error("equilibrium: no convergence in 100 iterations");
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(const ExtendedSystem& E,
                                                      const Eigen::VectorXd& x_eq,
                                                      const Eigen::VectorXd& u_eq) {
  const int n_state = E.n_x() + E.n_xt();
  const int n_in = E.n_u_direct() + E.n_xt();
  if (x_eq.size() != n_state || u_eq.size() != E.n_u_direct())
    throw std::invalid_argument("linearize: dimension mismatch");

  std::vector<std::string> state_names = E.xg_names;
  state_names.insert(state_names.end(), E.xpsi_names.begin(), E.xpsi_names.end());
  state_names.insert(state_names.end(), E.xt_names.begin(), E.xt_names.end());

  std::unordered_map<std::string, double> vals;
  for (int i = 0; i < n_state; ++i) vals[state_names[i]] = x_eq[i];
  for (int j = 0; j < E.n_u_direct(); ++j) vals[E.u_direct_names[j]] = u_eq[j];
  for (const auto& name : E.w_names) vals[name] = 0.0;
  for (const auto& name : E.d_names) vals[name] = 0.0;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_state, n_state);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_state, n_in);
  for (int i = 0; i < E.n_x(); ++i) {
    Polynomial row = E.f_ext.at(i, 0);
    for (int j = 0; j < E.n_u_direct(); ++j)
      row += E.g_ext.at(i, j) * Polynomial::variable(E.u_direct_names[j], E.vars);
    for (int j = 0; j < n_state; ++j)
      A(i, j) = row.differentiate(state_names[j]).evaluate(vals);
    for (int j = 0; j < E.n_u_direct(); ++j)
      B(i, j) = row.differentiate(E.u_direct_names[j]).evaluate(vals);
  }
  // x~ rows integrate virtual rate inputs.
  for (int k = 0; k < E.n_xt(); ++k) B(E.n_x() + k, E.n_u_direct() + k) = 1.0;
  return {A, B};
}

}  // namespace brs
