#ifndef BRS_POLYNOMIAL_HPP
#define BRS_POLYNOMIAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "brs/rational.hpp"

namespace brs {

/// Ordered set of named scalar variables. The declaration order is the total
/// order used by the graded-lex monomial ordering, so two polynomials over the
/// same set iterate their terms identically on every run.
class VariableSet {
 public:
  VariableSet() = default;
  explicit VariableSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
      if (!index_.emplace(names_[i], i).second)
        throw std::invalid_argument("VariableSet: duplicate variable name '" + names_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  /// Index of a name, or -1 when absent.
  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  int index_of(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw std::out_of_range("VariableSet: unknown variable '" + name + "'");
    return i;
  }
  bool contains(const std::string& name) const { return find(name) >= 0; }

  friend bool operator==(const VariableSet& a, const VariableSet& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

using VarSetPtr = std::shared_ptr<const VariableSet>;

inline VarSetPtr make_vars(std::vector<std::string> names) {
  return std::make_shared<const VariableSet>(std::move(names));
}

/// Union of two sets: all of `a` in order, then the variables of `b` not in
/// `a`, in b's order.
VarSetPtr union_vars(const VarSetPtr& a, const VarSetPtr& b);

/// Dense exponent vector over a VariableSet; entry i is the power of
/// variable i. Total degree is the sum of entries.
struct Monomial {
  std::vector<int> exp;

  int degree() const {
    int d = 0;
    for (int e : exp) d += e;
    return d;
  }
  bool is_constant() const {
    return std::all_of(exp.begin(), exp.end(), [](int e) { return e == 0; });
  }
  friend bool operator==(const Monomial& a, const Monomial& b) { return a.exp == b.exp; }
};

/// Graded lexicographic order: lower total degree first; ties broken
/// lexicographically on the exponent vector (earlier variables weigh more).
struct GradedLexLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    return a.exp < b.exp;
  }
};

/// Sparse multivariate polynomial over a shared VariableSet. Terms are kept
/// in a graded-lex ordered map with no explicit zero coefficients; values are
/// immutable in spirit — all operations return new polynomials.
template <typename C>
class BasicPolynomial {
 public:
  static constexpr int kDegNegInf = std::numeric_limits<int>::min();

  BasicPolynomial() : vars_(make_vars({})) {}
  explicit BasicPolynomial(VarSetPtr vars) : vars_(std::move(vars)) {}
  BasicPolynomial(C constant, VarSetPtr vars) : vars_(std::move(vars)) {
    if (!coeff_is_zero(constant))
      terms_.emplace(Monomial{std::vector<int>(vars_->size(), 0)}, constant);
  }

  static BasicPolynomial variable(const std::string& name, VarSetPtr vars) {
    BasicPolynomial p(vars);
    Monomial m{std::vector<int>(vars->size(), 0)};
    m.exp[vars->index_of(name)] = 1;
    p.terms_.emplace(std::move(m), C(1));
    return p;
  }

  const VarSetPtr& vars() const { return vars_; }
  const std::map<Monomial, C, GradedLexLess>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int num_terms() const { return static_cast<int>(terms_.size()); }

  /// Total degree; the zero polynomial reports the kDegNegInf sentinel.
  int degree() const {
    if (terms_.empty()) return kDegNegInf;
    return terms_.rbegin()->first.degree();
  }

  /// Maximum power of one variable across all terms (0 if absent).
  int degree_in(int var_index) const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.exp[var_index]);
    return d;
  }

  C coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? C(0) : it->second;
  }
  C constant_term() const { return coefficient(Monomial{std::vector<int>(vars_->size(), 0)}); }

  void add_term(const Monomial& m, C c) {
    if (static_cast<int>(m.exp.size()) != vars_->size())
      throw std::invalid_argument("Polynomial: monomial arity mismatch");
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (coeff_is_zero(it->second)) terms_.erase(it);
    } else if (coeff_is_zero(c)) {
      terms_.erase(it);
    }
  }

  friend BasicPolynomial operator+(const BasicPolynomial& p, const BasicPolynomial& q) {
    auto [a, b] = aligned(p, q);
    for (const auto& [m, c] : b.terms_) a.add_term(m, c);
    return a;
  }
  friend BasicPolynomial operator-(const BasicPolynomial& p, const BasicPolynomial& q) {
    auto [a, b] = aligned(p, q);
    for (const auto& [m, c] : b.terms_) a.add_term(m, -c);
    return a;
  }
  BasicPolynomial operator-() const {
    BasicPolynomial r(vars_);
    for (const auto& [m, c] : terms_) r.terms_.emplace(m, -c);
    return r;
  }
  friend BasicPolynomial operator*(const BasicPolynomial& p, const BasicPolynomial& q) {
    auto [a, b] = aligned(p, q);
    BasicPolynomial r(a.vars_);
    for (const auto& [ma, ca] : a.terms_) {
      for (const auto& [mb, cb] : b.terms_) {
        Monomial m = ma;
        for (size_t i = 0; i < m.exp.size(); ++i) m.exp[i] += mb.exp[i];
        r.add_term(m, ca * cb);
      }
    }
    return r;
  }
  friend BasicPolynomial operator*(C s, const BasicPolynomial& p) {
    BasicPolynomial r(p.vars_);
    if (coeff_is_zero(s)) return r;
    for (const auto& [m, c] : p.terms_) {
      C sc = s * c;
      if (!coeff_is_zero(sc)) r.terms_.emplace(m, sc);
    }
    return r;
  }
  friend BasicPolynomial operator*(const BasicPolynomial& p, C s) { return s * p; }
  BasicPolynomial& operator+=(const BasicPolynomial& q) { return *this = *this + q; }
  BasicPolynomial& operator-=(const BasicPolynomial& q) { return *this = *this - q; }

  friend bool operator==(const BasicPolynomial& p, const BasicPolynomial& q) {
    auto [a, b] = aligned(p, q);
    return a.terms_ == b.terms_;
  }

  /// Formal partial derivative with respect to one variable.
  BasicPolynomial differentiate(const std::string& var) const {
    const int vi = vars_->index_of(var);
    BasicPolynomial r(vars_);
    for (const auto& [m, c] : terms_) {
      if (m.exp[vi] == 0) continue;
      Monomial d = m;
      const int e = d.exp[vi]--;
      r.add_term(d, c * C(e));
    }
    return r;
  }

  /// Exact composition: each bound variable is replaced by its polynomial;
  /// unbound variables pass through. Bindings for variables not present in
  /// this polynomial's set are ignored.
  BasicPolynomial substitute(
      const std::vector<std::pair<std::string, BasicPolynomial>>& bindings) const {
    // Collect the target variable set: unbound own variables plus every
    // variable of every effective binding.
    std::vector<std::pair<int, const BasicPolynomial*>> eff;
    for (const auto& [name, poly] : bindings) {
      const int vi = vars_->find(name);
      if (vi >= 0) eff.emplace_back(vi, &poly);
    }
    if (eff.empty()) return *this;
    VarSetPtr out_vars = vars_;
    for (const auto& [vi, poly] : eff) out_vars = union_vars(out_vars, poly->vars());

    std::vector<const BasicPolynomial*> sub_of(vars_->size(), nullptr);
    for (const auto& [vi, poly] : eff) sub_of[vi] = poly;

    BasicPolynomial result(out_vars);
    // Power cache per bound variable to avoid recomputing q^e.
    std::vector<std::vector<BasicPolynomial>> powers(vars_->size());
    auto power_of = [&](int vi, int e) -> const BasicPolynomial& {
      auto& cache = powers[vi];
      if (cache.empty()) {
        cache.push_back(BasicPolynomial(C(1), out_vars));
        cache.push_back(sub_of[vi]->with_vars(out_vars));
      }
      while (static_cast<int>(cache.size()) <= e) cache.push_back(cache.back() * cache[1]);
      return cache[e];
    };

    for (const auto& [m, c] : terms_) {
      BasicPolynomial term(c, out_vars);
      Monomial passthrough{std::vector<int>(out_vars->size(), 0)};
      for (int vi = 0; vi < vars_->size(); ++vi) {
        if (m.exp[vi] == 0) continue;
        if (sub_of[vi] == nullptr) {
          passthrough.exp[out_vars->index_of(vars_->name(vi))] += m.exp[vi];
        } else {
          term = term * power_of(vi, m.exp[vi]);
        }
      }
      if (!passthrough.is_constant()) {
        BasicPolynomial pt(out_vars);
        pt.add_term(passthrough, C(1));
        term = term * pt;
      }
      result += term;
    }
    return result;
  }

  /// Re-express over another variable set. Variables of the current set that
  /// are missing from out_vars must not actually appear in any term.
  BasicPolynomial with_vars(const VarSetPtr& out_vars) const {
    if (out_vars == vars_ || *out_vars == *vars_) {
      BasicPolynomial r = *this;
      r.vars_ = out_vars;
      return r;
    }
    std::vector<int> remap(vars_->size());
    for (int i = 0; i < vars_->size(); ++i) remap[i] = out_vars->find(vars_->name(i));
    BasicPolynomial r(out_vars);
    for (const auto& [m, c] : terms_) {
      Monomial mm{std::vector<int>(out_vars->size(), 0)};
      for (int i = 0; i < vars_->size(); ++i) {
        if (m.exp[i] == 0) continue;
        if (remap[i] < 0)
          throw std::out_of_range("with_vars: variable '" + vars_->name(i) +
                                  "' appears but is absent from the target set");
        mm.exp[remap[i]] = m.exp[i];
      }
      r.terms_.emplace(std::move(mm), c);
    }
    return r;
  }

  /// Numeric value at a fully bound point. Uses Neumaier compensated
  /// accumulation over the term values when C = double.
  double evaluate(const std::unordered_map<std::string, double>& point) const {
    std::vector<double> vals(vars_->size());
    for (int i = 0; i < vars_->size(); ++i) {
      auto it = point.find(vars_->name(i));
      if (it == point.end()) {
        if (degree_in(i) > 0)
          throw std::invalid_argument("evaluate: unbound variable '" + vars_->name(i) + "'");
        vals[i] = 0.0;
      } else {
        vals[i] = it->second;
      }
    }
    return evaluate(vals);
  }
  double evaluate(const std::vector<double>& vals) const {
    if (static_cast<int>(vals.size()) != vars_->size())
      throw std::invalid_argument("evaluate: point dimension mismatch");
    double sum = 0.0, comp = 0.0;
    for (const auto& [m, c] : terms_) {
      double t = as_double(c);
      for (size_t i = 0; i < m.exp.size(); ++i)
        for (int e = 0; e < m.exp[i]; ++e) t *= vals[i];
      const double s = sum + t;
      if (std::abs(sum) >= std::abs(t))
        comp += (sum - s) + t;
      else
        comp += (t - s) + sum;
      sum = s;
    }
    return sum + comp;
  }

  /// Largest |coefficient| (0 for the zero polynomial); used for scaling.
  double max_abs_coeff() const {
    double m = 0.0;
    for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(as_double(c)));
    return m;
  }

  /// Drop coefficients below rel_tol times the largest magnitude. Solver
  /// round-off otherwise masks structural zeros downstream.
  BasicPolynomial cleaned(double rel_tol = 1e-12) const {
    const double cut = rel_tol * max_abs_coeff();
    BasicPolynomial r(vars_);
    for (const auto& [m, c] : terms_)
      if (std::abs(as_double(c)) > cut) r.terms_.emplace(m, c);
    return r;
  }

 private:
  static double as_double(double c) { return c; }
  static double as_double(const Rational& c) { return c.to_double(); }

  static std::pair<BasicPolynomial, BasicPolynomial> aligned(const BasicPolynomial& p,
                                                             const BasicPolynomial& q) {
    if (p.vars_ == q.vars_ || *p.vars_ == *q.vars_) return {p, q.with_vars(p.vars_)};
    VarSetPtr u = union_vars(p.vars_, q.vars_);
    return {p.with_vars(u), q.with_vars(u)};
  }

  VarSetPtr vars_;
  std::map<Monomial, C, GradedLexLess> terms_;
};

using Polynomial = BasicPolynomial<double>;
using RationalPolynomial = BasicPolynomial<Rational>;

/// Rectangular matrix of polynomials over one shared VariableSet.
class PolynomialMatrix {
 public:
  PolynomialMatrix() : rows_(0), cols_(0) {}
  PolynomialMatrix(int rows, int cols, VarSetPtr vars)
      : rows_(rows), cols_(cols), vars_(std::move(vars)),
        entries_(static_cast<size_t>(rows) * cols, Polynomial(vars_)) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const VarSetPtr& vars() const { return vars_; }

  Polynomial& at(int r, int c) { return entries_.at(static_cast<size_t>(r) * cols_ + c); }
  const Polynomial& at(int r, int c) const {
    return entries_.at(static_cast<size_t>(r) * cols_ + c);
  }
  void set(int r, int c, const Polynomial& p) { at(r, c) = p.with_vars(vars_); }

 private:
  int rows_, cols_;
  VarSetPtr vars_;
  std::vector<Polynomial> entries_;
};

/// Canonical text form: terms in descending graded-lex order, coefficients
/// printed with enough digits to round-trip exactly through parse().
std::string to_string(const Polynomial& p);

/// Parse the "+ - * ^" polynomial grammar over a known variable set.
/// Unknown identifiers raise std::invalid_argument with line/column info.
Polynomial parse_polynomial(const std::string& text, const VarSetPtr& vars);

/// Parse with an inferred variable set (first-occurrence order); test helper.
Polynomial parse_polynomial_any(const std::string& text);

}  // namespace brs

#endif  // BRS_POLYNOMIAL_HPP
