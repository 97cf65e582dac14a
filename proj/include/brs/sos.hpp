#ifndef BRS_SOS_HPP
#define BRS_SOS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "brs/polynomial.hpp"
#include "brs/sdp.hpp"

namespace brs {

/// Scalar decision handle; allocated densely from zero within one program.
using Handle = int;

struct HandleAllocator {
  int next = 0;
  Handle fresh() { return next++; }
  int fresh_range(int n) {
    const int first = next;
    next += n;
    return first;
  }
};

/// Polynomial that is affine in a set of scalar decision handles:
/// value(y) = fixed + sum_h y_h * basis_h.
class ParamPolynomial {
 public:
  ParamPolynomial() = default;
  explicit ParamPolynomial(Polynomial fixed) : fixed_(std::move(fixed)) {}

  static ParamPolynomial constant(double v, const VarSetPtr& vars) {
    return ParamPolynomial(Polynomial(v, vars));
  }
  /// One handle per monomial of total degree <= degree.
  static ParamPolynomial free_poly(const VarSetPtr& vars, int degree, HandleAllocator& alloc);
  /// A single fresh handle with the given coefficient polynomial.
  static ParamPolynomial scalar_handle(Handle h, const Polynomial& coeff);

  const Polynomial& fixed() const { return fixed_; }
  const std::map<Handle, Polynomial>& basis() const { return basis_; }
  bool is_fixed() const { return basis_.empty(); }

  void add_handle_term(Handle h, const Polynomial& coeff);

  ParamPolynomial operator-() const;
  friend ParamPolynomial operator+(const ParamPolynomial& a, const ParamPolynomial& b);
  friend ParamPolynomial operator-(const ParamPolynomial& a, const ParamPolynomial& b);
  /// Products keep affinity: one side must be handle-free.
  friend ParamPolynomial operator*(const Polynomial& p, const ParamPolynomial& a);
  friend ParamPolynomial operator*(double s, const ParamPolynomial& a);
  ParamPolynomial& operator+=(const ParamPolynomial& o) { return *this = *this + o; }
  ParamPolynomial& operator-=(const ParamPolynomial& o) { return *this = *this - o; }

  ParamPolynomial differentiate(const std::string& var) const;
  ParamPolynomial substitute(
      const std::vector<std::pair<std::string, Polynomial>>& bindings) const;

  /// Bind handles to numbers; handles absent from `values` are an error.
  Polynomial evaluate_handles(const std::map<Handle, double>& values) const;

  int max_degree() const;
  VarSetPtr all_vars() const;

 private:
  Polynomial fixed_;
  std::map<Handle, Polynomial> basis_;
};

/// "expression is a sum of squares in `vars`". The expression must use only
/// variables from `vars`; handle coefficients are free scalars. When
/// margin_handle is set, the compiled expression is
///   expression - margin * (sum over Gram basis monomials m of m^2),
/// which is the feasibility-margin objective used by the V-step.
struct SosConstraint {
  std::string name;
  ParamPolynomial expression;
  VarSetPtr vars;
  std::optional<Handle> margin_handle;
};

/// Affine-in-handles symmetric matrix constrained PSD (M sets, KYP blocks,
/// scalar bounds).
struct HandleLmi {
  std::string name;
  int dim = 0;
  std::vector<SymTriplet> constant;
  std::vector<std::pair<Handle, std::vector<SymTriplet>>> coeffs;

  void add_constant(int r, int c, double v) {
    if (r < c) std::swap(r, c);
    if (v != 0.0) constant.push_back({r, c, v});
  }
  void add_coeff(Handle h, int r, int c, double v);
};

struct HandleEquality {
  std::vector<std::pair<Handle, double>> terms;
  double rhs = 0.0;
};

struct SosProgram {
  HandleAllocator alloc;
  std::vector<SosConstraint> constraints;
  std::vector<HandleLmi> lmis;
  std::vector<HandleEquality> equalities;
  std::vector<std::pair<Handle, double>> objective;  // maximized

  /// Gram-parametrized SOS decision polynomial: handles are the svec
  /// coordinates of its Gram matrix, which is constrained PSD by a dedicated
  /// LMI. Cheaper than a free polynomial plus a separate SOS constraint.
  ParamPolynomial new_sos_poly(const VarSetPtr& vars, int degree, const std::string& name);
};

/// All monomials of total degree <= degree/2 over vars, graded lex.
/// degree must be even and nonnegative.
std::vector<Monomial> gram_basis(const VarSetPtr& vars, int degree);

struct GramInfo {
  std::string name;
  VarSetPtr vars;
  std::vector<Monomial> basis;
  int y_start = -1;      // first svec coordinate in the SdpProblem
  double scale = 1.0;    // expression was multiplied by this before matching
  std::optional<Handle> margin_handle;
};

/// Compiled program plus the maps needed to decompile solutions.
struct CompiledSos {
  SdpProblem sdp;
  std::vector<int> handle_to_y;
  std::vector<GramInfo> grams;
  std::vector<std::string> row_labels;  // "<constraint>:<monomial>" provenance

  double handle_value(Handle h, const Eigen::VectorXd& y) const;
  std::map<Handle, double> handle_values(const Eigen::VectorXd& y) const;
  /// Descaled Gram matrix of one SOS constraint at a solution.
  Eigen::MatrixXd gram(int constraint_index, const Eigen::VectorXd& y) const;
  /// m(x)^T Q m(x) of one constraint, for coefficient-match audits.
  Polynomial reconstruct(int constraint_index, const Eigen::VectorXd& y) const;
};

/// Compile every constraint into one Gram PSD block plus exact
/// coefficient-matching equalities; LMIs and handle equalities pass through.
/// Gram bases are pruned with the bounding-box Newton polytope test and the
/// diagonal-consistency reduction.
CompiledSos compile(const SosProgram& program);

struct SosCheckResult {
  bool is_sos = false;
  std::vector<Monomial> basis;
  Eigen::MatrixXd gram;
  double coeff_residual = 0.0;
  double min_eig = 0.0;
  std::string message;
};

/// Post-hoc certificate audit: decide SOS membership of a concrete
/// polynomial and return the Gram certificate when one exists.
SosCheckResult check_sos(const Polynomial& p, double tol = 1e-7,
                         const SolverOptions& opts = {});

}  // namespace brs

#endif  // BRS_SOS_HPP
