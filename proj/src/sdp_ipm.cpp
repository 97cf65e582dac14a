#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "brs/sdp.hpp"

namespace brs {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

// One A-matrix nonzero against a cone block, in svec coordinates premultiplied
// by the off-diagonal sqrt(2) factor: contribution to (A x)[row] is
// vc * X(i, j) with i >= j.
struct ConeEntry {
  int row;
  int i, j;
  double vc;
};

struct Normalized {
  std::vector<int> dims;                              // cone block dimensions
  std::vector<std::vector<ConeEntry>> entries;        // per block
  std::vector<Eigen::MatrixXd> c_cone;                // per block objective (min form)
  int m = 0;                                          // rows
  Eigen::VectorXd b;                                  // row right-hand sides
  Eigen::MatrixXd F;                                  // m x nf free columns
  Eigen::VectorXd c_free;                             // free objective (min form)
  // y recovery: (block, i, j, y index, factor): y = factor * X(i, j)
  std::vector<std::tuple<int, int, int, int, double>> cone_to_y;
  std::vector<int> free_to_y;
  std::vector<std::pair<int, double>> fixed_y;        // vars pinned to a value
  double scale_a = 1.0;                               // max |A| entry, for tests
  // Objective-free problems run as a phase-1 program: minimize the artificial
  // feasibility multiplier zeta over A x + r zeta = b, zeta >= 0. The start
  // (X = eta I, zeta = 1) is exactly primal feasible, and zeta* > 0 is a
  // clean infeasibility decision.
  int art_block = -1;
  double eta = 1.0;
};

struct FootprintPos {
  int block, i, j;
  double coeff;  // matrix-entry coefficient
};

// Collapse duplicate triplets and drop explicit zeros.
std::map<std::pair<int, int>, double> collapse(const std::vector<SymTriplet>& trips) {
  std::map<std::pair<int, int>, double> out;
  for (const auto& t : trips) {
    auto key = std::make_pair(std::max(t.row, t.col), std::min(t.row, t.col));
    out[key] += t.value;
  }
  for (auto it = out.begin(); it != out.end();) {
    if (it->second == 0.0)
      it = out.erase(it);
    else
      ++it;
  }
  return out;
}

}  // namespace

namespace detail {

// Brings the LMI-form problem to conic standard form. Blocks whose svec
// positions are each owned by a single dedicated variable become cone
// variables directly; all other blocks get slack svec variables tied back by
// linking rows. Remaining variables are free.
class IpmSolver {
 public:
  IpmSolver(const SdpProblem& prob, const SolverOptions& opts) : prob_(prob), opts_(opts) {}

  SdpSolution run() {
    const auto t0 = std::chrono::steady_clock::now();
    SdpSolution sol;
    std::optional<SdpStatus> early = normalize(sol);
    if (early) {
      sol.status = *early;
    } else if (norm_.dims.empty()) {
      solve_linear_only(sol);
    } else {
      iterate(sol);
    }
    sol.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sol.status == SdpStatus::Optimal && sol.block_min_eig.empty()) {
      // Statuses are honest: a claimed optimum satisfies the verify_solution
      // invariant at feas_tol. iterate() gates on this itself; the linear and
      // constant paths are checked here.
      const VerifyReport rep = verify_solution(prob_, sol.y, opts_.feas_tol);
      sol.block_min_eig = rep.block_min_eig;
      if (!rep.pass) {
        sol.status = SdpStatus::NumericalFailure;
        sol.message = "converged point failed the independent feasibility recheck";
      }
    }
    return sol;
  }

 private:
  // ---- problem normalization -------------------------------------------

  std::optional<SdpStatus> normalize(SdpSolution& sol) {
    const int ny = prob_.num_vars;
    std::vector<std::vector<FootprintPos>> footprint(ny);
    std::vector<std::map<std::pair<int, int>, double>> block_const(prob_.blocks.size());
    std::vector<std::map<std::pair<int, int>, std::vector<std::pair<int, double>>>> block_pos(
        prob_.blocks.size());

    for (size_t k = 0; k < prob_.blocks.size(); ++k) {
      const auto& blk = prob_.blocks[k];
      block_const[k] = collapse(blk.constant);
      for (const auto& [var, trips] : blk.coeffs) {
        if (var < 0 || var >= ny) throw std::invalid_argument("sdp: variable out of range");
        for (const auto& [pos, v] : collapse(trips)) {
          block_pos[k][pos].emplace_back(var, v);
          footprint[var].push_back({static_cast<int>(k), pos.first, pos.second, v});
        }
      }
    }

    // Variables with no footprint anywhere: pin to zero (unbounded if the
    // objective still wants them).
    std::vector<bool> in_rows(ny, false);
    for (const auto& row : prob_.equalities)
      for (const auto& [var, c] : row.terms)
        if (c != 0.0) in_rows[var] = true;

    std::vector<int> role(ny, kFree);
    for (int v = 0; v < ny; ++v) {
      if (footprint[v].empty() && !in_rows[v]) {
        double obj = 0.0;
        for (const auto& [var, c] : prob_.objective)
          if (var == v) obj += c;
        if (obj != 0.0) {
          sol.message = "variable " + std::to_string(v) + " is unconstrained with a nonzero cost";
          return SdpStatus::Unbounded;
        }
        role[v] = kFixed;
        norm_.fixed_y.emplace_back(v, 0.0);
      }
    }

    // Pure-coordinate blocks.
    std::vector<bool> block_is_pure(prob_.blocks.size(), false);
    std::vector<std::map<std::pair<int, int>, std::pair<int, double>>> pure_owner(
        prob_.blocks.size());
    for (size_t k = 0; k < prob_.blocks.size(); ++k) {
      const auto& blk = prob_.blocks[k];
      if (blk.dim == 0) continue;
      if (!block_const[k].empty()) continue;
      bool pure = true;
      std::map<std::pair<int, int>, std::pair<int, double>> owner;
      for (int j = 0; j < blk.dim && pure; ++j)
        for (int i = j; i < blk.dim && pure; ++i) {
          auto it = block_pos[k].find({i, j});
          if (it == block_pos[k].end() || it->second.size() != 1) {
            pure = false;
            break;
          }
          const auto& [var, v] = it->second.front();
          if (role[var] != kFree || footprint[var].size() != 1) {
            pure = false;
            break;
          }
          owner[{i, j}] = {var, v};
        }
      if (!pure) continue;
      // Each owner variable must be distinct (footprint size 1 ensures they
      // touch only this position of this block).
      block_is_pure[k] = true;
      pure_owner[k] = std::move(owner);
    }

    // Allocate cone blocks: pure blocks map their owners, general blocks get
    // slacks plus linking rows (assembled below).
    std::vector<int> block_to_cone(prob_.blocks.size(), -1);
    for (size_t k = 0; k < prob_.blocks.size(); ++k) {
      const auto& blk = prob_.blocks[k];
      if (blk.dim == 0) {
        // Vacuous constraint; any stray variables in it stay free.
        continue;
      }
      block_to_cone[k] = static_cast<int>(norm_.dims.size());
      norm_.dims.push_back(blk.dim);
      norm_.entries.emplace_back();
      norm_.c_cone.emplace_back(Eigen::MatrixXd::Zero(blk.dim, blk.dim));
      if (block_is_pure[k]) {
        for (const auto& [pos, ov] : pure_owner[k]) {
          role[ov.first] = kCone;
          cone_map_[ov.first] = {block_to_cone[k], pos.first, pos.second, ov.second};
          norm_.cone_to_y.emplace_back(block_to_cone[k], pos.first, pos.second, ov.first,
                                       1.0 / ov.second);
        }
      }
    }

    // Free variables are whatever is left.
    for (int v = 0; v < ny; ++v) {
      if (role[v] == kFree) {
        free_map_[v] = static_cast<int>(norm_.free_to_y.size());
        norm_.free_to_y.push_back(v);
      }
    }
    const int nf = static_cast<int>(norm_.free_to_y.size());

    // Rows: original equalities, then linking rows for general blocks.
    std::vector<std::tuple<int, int, double>> free_trips;
    std::vector<double> rhs;
    auto add_term = [&](int row, int var, double coeff) {
      switch (role[var]) {
        case kCone: {
          const auto& cm = cone_map_[var];
          // coeff * y = (coeff / v) * X(i,j)
          norm_.entries[cm.block].push_back({row, cm.i, cm.j, coeff / cm.coeff});
          break;
        }
        case kFree:
          free_trips.emplace_back(row, free_map_.at(var), coeff);
          break;
        default:
          break;  // fixed at zero: no contribution
      }
    };

    for (const auto& eq : prob_.equalities) {
      std::map<int, double> acc;
      for (const auto& [var, c] : eq.terms) acc[var] += c;
      bool all_zero = true;
      for (const auto& [var, c] : acc)
        if (c != 0.0 && role[var] != kFixed) all_zero = false;
      if (all_zero) {
        if (std::abs(eq.rhs) > opts_.feas_tol) {
          sol.message = "equality row with empty support and nonzero right-hand side";
          return SdpStatus::Infeasible;
        }
        continue;
      }
      const int row = static_cast<int>(rhs.size());
      rhs.push_back(eq.rhs);
      for (const auto& [var, c] : acc)
        if (c != 0.0) add_term(row, var, c);
    }

    for (size_t k = 0; k < prob_.blocks.size(); ++k) {
      if (block_is_pure[k] || prob_.blocks[k].dim == 0) continue;
      const int cone = block_to_cone[k];
      const int p = prob_.blocks[k].dim;
      for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) {
          const double cij = (i == j) ? 1.0 : kSqrt2;
          const int row = static_cast<int>(rhs.size());
          double c0 = 0.0;
          if (auto it = block_const[k].find({i, j}); it != block_const[k].end()) c0 = it->second;
          rhs.push_back(cij * c0);
          norm_.entries[cone].push_back({row, i, j, cij});
          if (auto it = block_pos[k].find({i, j}); it != block_pos[k].end())
            for (const auto& [var, v] : it->second) add_term(row, var, -cij * v);
        }
    }

    norm_.m = static_cast<int>(rhs.size());
    norm_.b = Eigen::Map<Eigen::VectorXd>(rhs.data(), norm_.m);
    norm_.F = Eigen::MatrixXd::Zero(norm_.m, nf);
    for (const auto& [r, c, v] : free_trips) norm_.F(r, c) += v;

    // Objective (min form): max b.y -> min (-b).y.
    norm_.c_free = Eigen::VectorXd::Zero(nf);
    for (const auto& [var, c] : prob_.objective) {
      switch (role[var]) {
        case kCone: {
          const auto& cm = cone_map_[var];
          const double w = -c / cm.coeff;
          if (cm.i == cm.j) {
            norm_.c_cone[cm.block](cm.i, cm.i) += w;
          } else {
            norm_.c_cone[cm.block](cm.i, cm.j) += 0.5 * w;
            norm_.c_cone[cm.block](cm.j, cm.i) += 0.5 * w;
          }
          break;
        }
        case kFree:
          norm_.c_free[free_map_[var]] += -c;
          break;
        default:
          break;
      }
    }

    if (auto early = facial_reduction(sol)) return early;

    // Row equilibration: scale every row to unit max entry.
    {
      std::vector<double> rmax(norm_.m, 0.0);
      for (const auto& blk : norm_.entries)
        for (const auto& e : blk) rmax[e.row] = std::max(rmax[e.row], std::abs(e.vc));
      for (int r = 0; r < norm_.m; ++r)
        for (int c = 0; c < static_cast<int>(norm_.free_to_y.size()); ++c)
          rmax[r] = std::max(rmax[r], std::abs(norm_.F(r, c)));
      for (int r = 0; r < norm_.m; ++r) {
        if (rmax[r] <= 0.0) rmax[r] = 1.0;
        norm_.b[r] /= rmax[r];
        if (norm_.F.cols() > 0) norm_.F.row(r) /= rmax[r];
      }
      for (auto& blk : norm_.entries)
        for (auto& e : blk) e.vc /= rmax[e.row];
    }

    // Phase-1 reformulation for pure feasibility problems.
    if (prob_.objective.empty() && !norm_.dims.empty()) {
      norm_.eta = std::sqrt(1.0 + norm_.b.norm());
      Eigen::VectorXd r = norm_.b;
      for (size_t k = 0; k < norm_.dims.size(); ++k)
        for (const auto& e : norm_.entries[k])
          if (e.i == e.j) r[e.row] -= e.vc * norm_.eta;
      if (r.lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + norm_.b.norm())) {
        norm_.art_block = static_cast<int>(norm_.dims.size());
        norm_.dims.push_back(1);
        std::vector<ConeEntry> ents;
        for (int row = 0; row < norm_.m; ++row)
          if (r[row] != 0.0) ents.push_back({row, 0, 0, r[row]});
        norm_.entries.push_back(std::move(ents));
        norm_.c_cone.push_back(Eigen::MatrixXd::Constant(1, 1, 1.0));
      }
    }

    for (const auto& blkents : norm_.entries)
      for (const auto& e : blkents) norm_.scale_a = std::max(norm_.scale_a, std::abs(e.vc));

    // Fully constant problem: decide by inspection.
    if (norm_.dims.empty() && nf == 0) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(ny);
      for (const auto& [var, val] : norm_.fixed_y) y[var] = val;
      const VerifyReport rep = verify_solution(prob_, y, opts_.feas_tol);
      sol.y = y;
      sol.objective = 0.0;
      sol.block_min_eig = rep.block_min_eig;
      sol.message = rep.pass ? "constant problem" : "constant infeasible data";
      return rep.pass ? SdpStatus::Optimal : SdpStatus::Infeasible;
    }
    // Constant blocks (dim > 0 but no cone allocated can't happen: every
    // nonempty block became a cone). Nothing else to check here.
    return std::nullopt;
  }

  // ---- facial reduction presolve -----------------------------------------

  // A zero-right-hand-side row whose surviving support consists of cone
  // DIAGONAL coordinates with one common sign forces every one of them to
  // zero; positive semidefiniteness then kills the whole matrix row/column.
  // SOS programs whose expressions vanish identically at a point (the
  // dissipation at the equilibrium) have no strictly feasible point without
  // this reduction and stall the interior-point iteration.
  std::optional<SdpStatus> facial_reduction(SdpSolution& sol) {
    const int nb = static_cast<int>(norm_.dims.size());
    const int nf = static_cast<int>(norm_.free_to_y.size());
    // The implication "all-diagonal same-sign row forces zeros" is only sound
    // for exactly-zero right-hand sides; a tolerance here can cascade into
    // false infeasibility verdicts.

    std::vector<std::vector<std::tuple<int, int, int, double>>> row_ents(norm_.m);
    for (int k = 0; k < nb; ++k)
      for (const auto& e : norm_.entries[k])
        row_ents[e.row].emplace_back(k, e.i, e.j, e.vc);
    std::vector<bool> row_dead(norm_.m, false), row_has_free(norm_.m, false);
    if (nf > 0)
      for (int r = 0; r < norm_.m; ++r)
        row_has_free[r] = norm_.F.row(r).lpNorm<Eigen::Infinity>() != 0.0;

    std::vector<std::set<int>> dead(nb);
    auto alive = [&](int k, int i, int j) {
      return !dead[k].count(i) && !dead[k].count(j);
    };

    for (bool changed = true; changed;) {
      changed = false;
      for (int r = 0; r < norm_.m; ++r) {
        if (row_dead[r] || row_has_free[r] || norm_.b[r] != 0.0) continue;
        bool alldiag = true, any = false;
        int sign = 0;
        for (const auto& [k, i, j, vc] : row_ents[r]) {
          if (!alive(k, i, j)) continue;
          any = true;
          if (i != j) {
            alldiag = false;
            break;
          }
          const int s = vc > 0.0 ? 1 : -1;
          if (sign == 0)
            sign = s;
          else if (sign != s) {
            alldiag = false;
            break;
          }
        }
        if (!any || !alldiag) continue;
        for (const auto& [k, i, j, vc] : row_ents[r])
          if (alive(k, i, j)) dead[k].insert(i);
        row_dead[r] = true;
        changed = true;
      }
    }

    bool shrunk = false;
    for (int k = 0; k < nb; ++k) shrunk |= !dead[k].empty();
    if (opts_.verbose) {
      std::cerr << "facial reduction:";
      for (int k = 0; k < nb; ++k)
        if (!dead[k].empty())
          std::cerr << " block" << k << "(dim " << norm_.dims[k] << "): -" << dead[k].size();
      std::cerr << "\n";
    }

    // Rows whose support died entirely: inconsistent if the right-hand side
    // is materially nonzero.
    for (int r = 0; r < norm_.m; ++r) {
      if (row_dead[r]) continue;
      bool any = row_has_free[r];
      for (const auto& [k, i, j, vc] : row_ents[r])
        if (alive(k, i, j)) any = true;
      if (!any) {
        if (std::abs(norm_.b[r]) > opts_.feas_tol) {
          sol.message = "facial reduction exposed an inconsistent row";
          return SdpStatus::Infeasible;
        }
        row_dead[r] = true;
        shrunk = true;
      }
    }
    if (!shrunk) return std::nullopt;

    // Compress rows.
    std::vector<int> row_map(norm_.m, -1);
    int new_m = 0;
    for (int r = 0; r < norm_.m; ++r)
      if (!row_dead[r]) row_map[r] = new_m++;
    Eigen::VectorXd b_new(new_m);
    Eigen::MatrixXd F_new(new_m, nf);
    for (int r = 0; r < norm_.m; ++r)
      if (row_map[r] >= 0) {
        b_new[row_map[r]] = norm_.b[r];
        if (nf > 0) F_new.row(row_map[r]) = norm_.F.row(r);
      }
    norm_.b = std::move(b_new);
    norm_.F = std::move(F_new);
    norm_.m = new_m;

    // Compress blocks (dropping empty ones) and remap entries and maps.
    std::vector<int> block_map(nb, -1);
    std::vector<std::vector<int>> idx_map(nb);
    std::vector<int> dims_new;
    std::vector<std::vector<ConeEntry>> entries_new;
    std::vector<Eigen::MatrixXd> c_cone_new;
    for (int k = 0; k < nb; ++k) {
      idx_map[k].assign(norm_.dims[k], -1);
      int nn = 0;
      for (int i = 0; i < norm_.dims[k]; ++i)
        if (!dead[k].count(i)) idx_map[k][i] = nn++;
      if (nn == 0) continue;
      block_map[k] = static_cast<int>(dims_new.size());
      dims_new.push_back(nn);
      std::vector<ConeEntry> ents;
      for (const auto& e : norm_.entries[k]) {
        if (row_map[e.row] < 0) continue;
        if (idx_map[k][e.i] < 0 || idx_map[k][e.j] < 0) continue;
        ents.push_back({row_map[e.row], idx_map[k][e.i], idx_map[k][e.j], e.vc});
      }
      entries_new.push_back(std::move(ents));
      Eigen::MatrixXd C(nn, nn);
      for (int i = 0; i < norm_.dims[k]; ++i)
        for (int j = 0; j < norm_.dims[k]; ++j)
          if (idx_map[k][i] >= 0 && idx_map[k][j] >= 0)
            C(idx_map[k][i], idx_map[k][j]) = norm_.c_cone[k](i, j);
      c_cone_new.push_back(std::move(C));
    }
    std::vector<std::tuple<int, int, int, int, double>> cone_to_y_new;
    for (const auto& [blk, i, j, var, factor] : norm_.cone_to_y) {
      if (block_map[blk] < 0 || idx_map[blk][i] < 0 || idx_map[blk][j] < 0) {
        norm_.fixed_y.emplace_back(var, 0.0);
      } else {
        cone_to_y_new.emplace_back(block_map[blk], idx_map[blk][i], idx_map[blk][j], var,
                                   factor);
      }
    }
    norm_.dims = std::move(dims_new);
    norm_.entries = std::move(entries_new);
    norm_.c_cone = std::move(c_cone_new);
    norm_.cone_to_y = std::move(cone_to_y_new);
    return std::nullopt;
  }

  // ---- degenerate linear path ------------------------------------------

  void solve_linear_only(SdpSolution& sol) {
    // min c.u s.t. F u = b with u free: feasibility via least squares, and
    // boundedness iff c lies in range(F^T).
    const auto& F = norm_.F;
    Eigen::VectorXd u = F.colPivHouseholderQr().solve(norm_.b);
    if ((F * u - norm_.b).lpNorm<Eigen::Infinity>() > opts_.feas_tol * (1 + norm_.b.norm())) {
      sol.status = SdpStatus::Infeasible;
      sol.message = "inconsistent equality system";
      return;
    }
    Eigen::VectorXd lam = F.transpose().colPivHouseholderQr().solve(norm_.c_free);
    if ((F.transpose() * lam - norm_.c_free).lpNorm<Eigen::Infinity>() >
        1e-9 * (1 + norm_.c_free.norm())) {
      sol.status = SdpStatus::Unbounded;
      sol.message = "cost has a component along the equality null space";
      return;
    }
    assemble_y(sol, {}, u);
    sol.status = SdpStatus::Optimal;
  }

  // ---- interior-point iteration ----------------------------------------

  struct BlockState {
    Eigen::MatrixXd X, S, W, R, Rinv, Lx, Ls;
    Eigen::VectorXd sigma;  // scaled-space spectrum
  };

  void iterate(SdpSolution& sol) {
    const int nb = static_cast<int>(norm_.dims.size());
    const int m = norm_.m;
    const int nf = static_cast<int>(norm_.free_to_y.size());
    const double bnorm = 1.0 + norm_.b.norm();
    double cnorm = 1.0 + norm_.c_free.norm();
    for (const auto& C : norm_.c_cone) cnorm += C.norm();

    const bool phase1 = norm_.art_block >= 0;
    std::vector<BlockState> st(nb);
    int total_dim = 0;
    for (int k = 0; k < nb; ++k) {
      const int p = norm_.dims[k];
      total_dim += p;
      double scale = 1.0;
      for (const auto& e : norm_.entries[k]) scale = std::max(scale, std::abs(e.vc));
      if (phase1) {
        st[k].X = (k == norm_.art_block ? 1.0 : norm_.eta) * Eigen::MatrixXd::Identity(p, p);
        st[k].S = Eigen::MatrixXd::Identity(p, p);
      } else {
        st[k].X = std::sqrt(bnorm) * Eigen::MatrixXd::Identity(p, p);
        st[k].S = std::max(1.0, cnorm / scale) * Eigen::MatrixXd::Identity(p, p);
      }
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(nf);
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);

    Eigen::MatrixXd M(m, m);
    std::vector<Eigen::MatrixXd> Rd(nb), Rc(nb), dX(nb), dS(nb), dXa(nb), dSa(nb);

    double best_gap = 1e300;
    int stall = 0;
    double rtol = std::max(opts_.feas_tol, 1e-13);
    double gtol = std::max(opts_.gap_tol, 1e-13);

    for (int iter = 0; iter < opts_.max_iterations; ++iter) {
      sol.iterations = iter + 1;

      // Residuals.
      Eigen::VectorXd rp = norm_.b - norm_.F * u;
      for (int k = 0; k < nb; ++k) apply_a(k, st[k].X, rp, -1.0);
      Eigen::VectorXd rf = norm_.c_free - norm_.F.transpose() * lam;
      double mu = 0.0, dres = 0.0;
      double pobj = norm_.c_free.dot(u), dobj = norm_.b.dot(lam);
      for (int k = 0; k < nb; ++k) {
        Rd[k] = norm_.c_cone[k] - adjoint(k, lam) - st[k].S;
        mu += st[k].X.cwiseProduct(st[k].S).sum();
        pobj += norm_.c_cone[k].cwiseProduct(st[k].X).sum();
        dres = std::max(dres, Rd[k].lpNorm<Eigen::Infinity>());
      }
      mu /= std::max(1, total_dim);
      const double pinf = rp.lpNorm<Eigen::Infinity>() / bnorm;
      const double dinf = std::max(dres, nf ? rf.lpNorm<Eigen::Infinity>() : 0.0) / cnorm;
      const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

      if (opts_.verbose)
        std::cerr << "ipm " << iter << " mu=" << mu << " pinf=" << pinf << " dinf=" << dinf
                  << " gap=" << relgap << " pobj=" << pobj << "\n";

      // Acceptance is driven by the absolute invariant at the recovered
      // point: any verified point closes a phase-1 run (the drift of the late
      // iterations can shrink the pass window, so every iterate is tried),
      // while problems with an objective also need the duality measures.
      const bool maybe_done =
          phase1 ? (st[norm_.art_block].X(0, 0) < 1e3 * opts_.feas_tol || pinf <= rtol)
                 : (pinf <= rtol && dinf <= rtol && relgap <= gtol);
      if (maybe_done) {
        finish_optimal(sol, st, u, pobj);
        const VerifyReport rep = verify_solution(prob_, sol.y, opts_.feas_tol);
        if (rep.pass && (phase1 || (dinf <= rtol && relgap <= gtol))) {
          sol.block_min_eig = rep.block_min_eig;
          return;
        }
        if (opts_.verbose) {
          double mineig = 0.0;
          for (double e : rep.block_min_eig) mineig = std::min(mineig, e);
          std::cerr << "  candidate rejected: eq_res=" << rep.max_equality_residual
                    << " min_eig=" << mineig << "\n";
        }
        sol.status = SdpStatus::NumericalFailure;
        if (!phase1) {
          rtol = std::max(rtol * 0.1, 1e-14);
          gtol = std::max(gtol * 0.1, 1e-14);
        }
      }
      if (phase1) {
        // Weak duality: a dual-feasible point with positive objective bounds
        // the optimal artificial multiplier away from zero.
        if (dinf <= 1e-2 * opts_.feas_tol && relgap <= 1e-2 &&
            dobj >= 100.0 * opts_.feas_tol * (1.0 + bnorm)) {
          sol.status = SdpStatus::Infeasible;
          sol.message = "phase-1 margin bounded away from zero (dual bound " +
                        std::to_string(dobj) + ")";
          sol.y = Eigen::VectorXd::Zero(prob_.num_vars);
          return;
        }
      }
      if (!phase1 && (detect_infeasible(lam, sol) || detect_unbounded(st, u, sol))) return;

      // Stall only when none of the convergence measures improves over a
      // window (individually: infeasibility plateaus while the gap closes is
      // normal progress).
      const double progress = std::max({pinf, dinf, relgap, mu / (1.0 + std::abs(pobj))});
      if (progress < best_gap * 0.99) {
        best_gap = progress;
        stall = 0;
      } else if (++stall > 120) {
        sol.message = "no progress over 120 iterations";
        sol.status = SdpStatus::NumericalFailure;
        return;
      }

      // Nesterov-Todd scaling per block.
      for (int k = 0; k < nb; ++k)
        if (!nt_scaling(st[k])) {
          sol.message = "lost positive definiteness in the scaling step";
          sol.status = SdpStatus::NumericalFailure;
          return;
        }

      // Schur complement, diagonally equilibrated before factorization.
      // Rows supported only on free columns have zero diagonal: leave them
      // unscaled.
      assemble_schur(st, M);
      const double dfloor = 1e-12 * (1.0 + M.diagonal().maxCoeff());
      Eigen::VectorXd dscale(m);
      for (int r = 0; r < m; ++r)
        dscale[r] = M(r, r) > dfloor ? 1.0 / std::sqrt(M(r, r)) : 1.0;
      M = dscale.asDiagonal() * M * dscale.asDiagonal();
      const double reg = 1e-13;
      M.diagonal().array() += reg;
      Eigen::LLT<Eigen::MatrixXd> llt(M);
      for (double boost = reg; llt.info() != Eigen::Success && boost < 1e-4; boost *= 1e3) {
        M.diagonal().array() += boost;
        llt.compute(M);
      }
      if (llt.info() != Eigen::Success) {
        sol.message = "Schur complement factorization failed";
        sol.status = SdpStatus::NumericalFailure;
        return;
      }
      auto msolve = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
        return dscale.asDiagonal() * llt.solve((dscale.asDiagonal() * rhs).eval());
      };
      Eigen::MatrixXd FY;
      Eigen::LLT<Eigen::MatrixXd> lltZ;
      if (nf > 0) {
        FY = dscale.asDiagonal() * llt.solve((dscale.asDiagonal() * norm_.F).eval());
        Eigen::MatrixXd Z = norm_.F.transpose() * FY;
        Z.diagonal().array() += 1e-13 * (1.0 + Z.trace() / std::max(1, nf));
        lltZ.compute(Z);
        if (lltZ.info() != Eigen::Success) {
          sol.message = "free-variable reduction failed (collinear free columns?)";
          sol.status = SdpStatus::NumericalFailure;
          return;
        }
      }

      auto solve_kkt = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                           Eigen::VectorXd& dlam, Eigen::VectorXd& du) {
        auto pass = [&](const Eigen::VectorXd& pp, const Eigen::VectorXd& qq,
                        Eigen::VectorXd& dl, Eigen::VectorXd& dv) {
          if (nf > 0) {
            dv = lltZ.solve(FY.transpose() * pp - qq);
            dl = msolve(pp - norm_.F * dv);
          } else {
            dv.resize(0);
            dl = msolve(pp);
          }
        };
        auto mul_m = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
          // Original (unequilibrated) Schur action: D^{-1} Mtilde D^{-1} v.
          return dscale.cwiseInverse().asDiagonal() *
                 (M * (dscale.cwiseInverse().asDiagonal() * v).eval()).eval();
        };
        pass(p, q, dlam, du);
        // Iterative refinement against the exact saddle system.
        for (int round = 0; round < 2; ++round) {
          Eigen::VectorXd r1 = p - mul_m(dlam);
          Eigen::VectorXd r2;
          if (nf > 0) {
            r1 -= norm_.F * du;
            r2 = q - norm_.F.transpose() * dlam;
          } else {
            r2.resize(0);
          }
          const double res = r1.lpNorm<Eigen::Infinity>() +
                             (nf > 0 ? r2.lpNorm<Eigen::Infinity>() : 0.0);
          if (res <= 1e-13 * (1.0 + p.lpNorm<Eigen::Infinity>())) break;
          Eigen::VectorXd cl, cv;
          pass(r1, r2, cl, cv);
          dlam += cl;
          if (nf > 0) du += cv;
        }
      };

      // Direction for given centering targets Rc: solve the Schur system,
      // then refine against the exact operator chain (the formed M loses
      // digits once the scaling W degenerates near the boundary).
      auto direction = [&](const std::vector<Eigen::MatrixXd>& Rcs, Eigen::VectorXd& dlam,
                           Eigen::VectorXd& du, std::vector<Eigen::MatrixXd>& dXo,
                           std::vector<Eigen::MatrixXd>& dSo) {
        Eigen::VectorXd rhs = rp;
        for (int k = 0; k < nb; ++k) {
          Eigen::MatrixXd T = Rcs[k] - st[k].W * Rd[k] * st[k].W;
          apply_a(k, T, rhs, -1.0);
        }
        solve_kkt(rhs, rf, dlam, du);
        for (int refine = 0;; ++refine) {
          for (int k = 0; k < nb; ++k) {
            dSo[k] = Rd[k] - adjoint(k, dlam);
            dXo[k] = Rcs[k] - st[k].W * dSo[k] * st[k].W;
          }
          if (refine >= 2) break;
          Eigen::VectorXd rtrue = rp;
          for (int k = 0; k < nb; ++k) apply_a(k, dXo[k], rtrue, -1.0);
          Eigen::VectorXd rfree = rf;
          if (nf > 0) {
            rtrue -= norm_.F * du;
            rfree -= norm_.F.transpose() * dlam;
          }
          if (rtrue.lpNorm<Eigen::Infinity>() + rfree.lpNorm<Eigen::Infinity>() <=
              1e-12 * (1.0 + rp.lpNorm<Eigen::Infinity>()))
            break;
          Eigen::VectorXd cl, cu;
          solve_kkt(rtrue, rfree, cl, cu);
          dlam += cl;
          if (nf > 0) du += cu;
        }
      };

      // Affine (predictor) direction: sigma = 0.
      Eigen::VectorXd dlam, du;
      for (int k = 0; k < nb; ++k) Rc[k] = -st[k].X;  // target 0 on the central path
      direction(Rc, dlam, du, dXa, dSa);
      const double ap_aff = max_step(st, dXa, /*primal=*/true);
      const double ad_aff = max_step(st, dSa, /*primal=*/false);
      double mu_aff = 0.0;
      for (int k = 0; k < nb; ++k)
        mu_aff += (st[k].X + std::min(1.0, ap_aff) * dXa[k])
                      .cwiseProduct(st[k].S + std::min(1.0, ad_aff) * dSa[k])
                      .sum();
      mu_aff /= std::max(1, total_dim);
      double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);
      sigma = std::clamp(sigma, 1e-8, 1.0);

      // Corrector direction with a Mehrotra-style second-order term.
      for (int k = 0; k < nb; ++k) {
        const int p = norm_.dims[k];
        const Eigen::MatrixXd dXh = st[k].Rinv * dXa[k] * st[k].Rinv.transpose();
        const Eigen::MatrixXd dSh = st[k].R.transpose() * dSa[k] * st[k].R;
        const Eigen::MatrixXd H = 0.5 * (dXh * dSh + dSh.transpose() * dXh.transpose());
        Eigen::MatrixXd C(p, p);
        for (int a = 0; a < p; ++a)
          for (int c = 0; c < p; ++c)
            C(a, c) = 2.0 * H(a, c) / (st[k].sigma[a] + st[k].sigma[c]);
        C = 0.5 * (C + C.transpose()).eval();
        const Eigen::MatrixXd Sinv =
            st[k].Ls.transpose().triangularView<Eigen::Upper>().solve(
                st[k].Ls.triangularView<Eigen::Lower>().solve(
                    Eigen::MatrixXd::Identity(p, p)));
        Rc[k] = sigma * mu * Sinv - st[k].X - st[k].R * C * st[k].R.transpose();
      }
      direction(Rc, dlam, du, dX, dS);

      const double tau =
          iter < 3 ? 0.95 : std::clamp(1.0 - 5.0 * mu / (1.0 + std::abs(pobj)), 0.97, 0.9995);
      const double ap = std::min(1.0, tau * max_step(st, dX, true));
      const double ad = std::min(1.0, tau * max_step(st, dS, false));
      for (int k = 0; k < nb; ++k) {
        st[k].X += ap * dX[k];
        st[k].S += ad * dS[k];
        st[k].X = 0.5 * (st[k].X + st[k].X.transpose()).eval();
        st[k].S = 0.5 * (st[k].S + st[k].S.transpose()).eval();
      }
      u += ap * du;
      lam += ad * dlam;

      if (mu < 1e-16 && (pinf > opts_.feas_tol || dinf > opts_.feas_tol)) {
        sol.message = "complementarity exhausted before feasibility";
        sol.status = SdpStatus::NumericalFailure;
        return;
      }
    }
    sol.message = "iteration limit reached";
    sol.status = SdpStatus::NumericalFailure;
  }

  // (A x)[row] += scale * sum vc * X(i, j) for one block.
  void apply_a(int k, const Eigen::MatrixXd& X, Eigen::VectorXd& out, double scale) const {
    for (const auto& e : norm_.entries[k]) out[e.row] += scale * e.vc * X(e.i, e.j);
  }

  // mat(A_k^T lam): vc/2 on both off-diagonal triangles, vc on the diagonal.
  Eigen::MatrixXd adjoint(int k, const Eigen::VectorXd& lam) const {
    const int p = norm_.dims[k];
    Eigen::MatrixXd Madj = Eigen::MatrixXd::Zero(p, p);
    for (const auto& e : norm_.entries[k]) {
      const double w = e.vc * lam[e.row];
      if (e.i == e.j) {
        Madj(e.i, e.i) += w;
      } else {
        Madj(e.i, e.j) += 0.5 * w;
        Madj(e.j, e.i) += 0.5 * w;
      }
    }
    return Madj;
  }

  bool nt_scaling(BlockState& s) {
    const int p = static_cast<int>(s.X.rows());
    Eigen::LLT<Eigen::MatrixXd> lx(s.X), ls(s.S);
    if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
    s.Lx = lx.matrixL();
    s.Ls = ls.matrixL();
    const Eigen::MatrixXd K = s.Ls.transpose() * s.Lx;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
    s.sigma = svd.singularValues();
    if (s.sigma.minCoeff() <= 0.0) return false;
    const Eigen::VectorXd isqrt = s.sigma.cwiseSqrt().cwiseInverse();
    s.R = s.Lx * svd.matrixV() * isqrt.asDiagonal();
    s.Rinv = isqrt.asDiagonal() * svd.matrixU().transpose() * s.Ls.transpose();
    s.W = s.R * s.R.transpose();
    (void)p;
    return true;
  }

  // M = sum_k A_k (W_k (x)_s W_k) A_k^T using the pairwise closed form.
  void assemble_schur(const std::vector<BlockState>& st, Eigen::MatrixXd& M) const {
    M.setZero();
    for (size_t k = 0; k < norm_.entries.size(); ++k) {
      const auto& ents = norm_.entries[k];
      const Eigen::MatrixXd& W = st[k].W;
      const size_t n = ents.size();
      for (size_t a = 0; a < n; ++a) {
        const auto& ea = ents[a];
        const double va = ea.vc;
        for (size_t b = a; b < n; ++b) {
          const auto& eb = ents[b];
          double w = 0.5 * va * eb.vc *
                     (W(ea.i, eb.i) * W(ea.j, eb.j) + W(ea.i, eb.j) * W(ea.j, eb.i));
          // Distinct entries hitting the same row contribute both (a,b) and
          // (b,a) to that diagonal element.
          if (a != b && ea.row == eb.row) w *= 2.0;
          if (ea.row <= eb.row)
            M(ea.row, eb.row) += w;
          else
            M(eb.row, ea.row) += w;
        }
      }
    }
    M = M.selfadjointView<Eigen::Upper>();
  }

  // Largest step keeping X + alpha dX (or S + alpha dS) positive definite.
  double max_step(const std::vector<BlockState>& st, const std::vector<Eigen::MatrixXd>& d,
                  bool primal) const {
    double alpha = 1e30;
    for (size_t k = 0; k < st.size(); ++k) {
      const Eigen::MatrixXd& L = primal ? st[k].Lx : st[k].Ls;
      Eigen::MatrixXd T = L.triangularView<Eigen::Lower>().solve(d[k]);
      T = L.triangularView<Eigen::Lower>()
              .solve(T.transpose().eval())
              .eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (T + T.transpose()),
                                                        Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues().minCoeff();
      if (lmin < 0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
  }

  bool detect_infeasible(const Eigen::VectorXd& lam, SdpSolution& sol) const {
    // Farkas ray: after normalizing b.lam = 1 the residuals must be small in
    // an absolute sense, otherwise the "certificate" proves nothing for
    // solutions of moderate size.
    const double beta = norm_.b.dot(lam);
    if (beta <= 1e-7 * (1.0 + norm_.b.norm()) * (1.0 + lam.norm())) return false;
    const Eigen::VectorXd lh = lam / beta;
    if (norm_.F.cols() > 0 &&
        (norm_.F.transpose() * lh).lpNorm<Eigen::Infinity>() > 1e-8)
      return false;
    for (size_t k = 0; k < norm_.dims.size(); ++k) {
      const Eigen::MatrixXd Madj = adjoint(static_cast<int>(k), lh);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Madj, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().maxCoeff() > 1e-8) return false;
    }
    sol.status = SdpStatus::Infeasible;
    sol.message = "Farkas certificate found (dual improving ray)";
    sol.y = Eigen::VectorXd::Zero(prob_.num_vars);
    return true;
  }

  bool detect_unbounded(const std::vector<BlockState>& st, const Eigen::VectorXd& u,
                        SdpSolution& sol) const {
    double cdot = norm_.c_free.dot(u);
    double xnorm = u.norm();
    for (size_t k = 0; k < st.size(); ++k) {
      cdot += norm_.c_cone[k].cwiseProduct(st[k].X).sum();
      xnorm += st[k].X.norm();
    }
    if (cdot >= -1e-6 * (1.0 + xnorm) || xnorm < 1e6) return false;
    // Candidate primal ray with c.xhat = -1: residuals judged absolutely.
    Eigen::VectorXd ax = -norm_.F * (u / -cdot);
    for (size_t k = 0; k < st.size(); ++k)
      apply_a(static_cast<int>(k), st[k].X / -cdot, ax, -1.0);
    // ax now holds -(A xhat); require A xhat ~ 0.
    if (ax.lpNorm<Eigen::Infinity>() > 1e-8) return false;
    sol.status = SdpStatus::Unbounded;
    sol.message = "primal improving ray found";
    sol.y = Eigen::VectorXd::Zero(prob_.num_vars);
    return true;
  }

  void finish_optimal(SdpSolution& sol, const std::vector<BlockState>& st,
                      const Eigen::VectorXd& u, double pobj) {
    (void)pobj;
    assemble_y(sol, st, u);  // recomputes the maximization objective from y
    sol.status = SdpStatus::Optimal;
  }

  void assemble_y(SdpSolution& sol, const std::vector<BlockState>& st,
                  const Eigen::VectorXd& u) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(prob_.num_vars);
    for (const auto& [var, val] : norm_.fixed_y) y[var] = val;
    for (const auto& [blk, i, j, var, factor] : norm_.cone_to_y)
      y[var] = factor * st[blk].X(i, j);
    for (size_t f = 0; f < norm_.free_to_y.size(); ++f) y[norm_.free_to_y[f]] = u[f];
    sol.y = y;
    double obj = 0.0;
    for (const auto& [var, c] : prob_.objective) obj += c * y[var];
    sol.objective = obj;
  }

  static constexpr int kFree = 0, kCone = 1, kFixed = 2;
  struct ConeMap {
    int block, i, j;
    double coeff;
  };

  const SdpProblem& prob_;
  const SolverOptions& opts_;
  Normalized norm_;
  std::map<int, ConeMap> cone_map_;
  std::map<int, int> free_map_;
};

}  // namespace detail

SdpSolution solve(const SdpProblem& prob, const SolverOptions& opts) {
  detail::IpmSolver solver(prob, opts);
  return solver.run();
}

}  // namespace brs
