#include "brs/polynomial.hpp"

#include <cstdio>

namespace brs {

VarSetPtr union_vars(const VarSetPtr& a, const VarSetPtr& b) {
  if (a == b || *a == *b) return a;
  std::vector<std::string> names = a->names();
  bool grew = false;
  for (const auto& n : b->names()) {
    if (!a->contains(n)) {
      names.push_back(n);
      grew = true;
    }
  }
  if (!grew) return a;
  return make_vars(std::move(names));
}

namespace {

std::string format_coeff(double c) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", c);
  return buf;
}

std::string format_monomial(const Monomial& m, const VariableSet& vars) {
  std::string s;
  for (size_t i = 0; i < m.exp.size(); ++i) {
    if (m.exp[i] == 0) continue;
    if (!s.empty()) s += "*";
    s += vars.name(static_cast<int>(i));
    if (m.exp[i] > 1) s += "^" + std::to_string(m.exp[i]);
  }
  return s;
}

}  // namespace

std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string out;
  // Descending graded-lex: leading term first.
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
    const double c = it->second;
    const std::string mono = format_monomial(it->first, *p.vars());
    if (out.empty()) {
      if (c < 0) out += "-";
    } else {
      out += c < 0 ? " - " : " + ";
    }
    const double mag = std::abs(c);
    if (mono.empty()) {
      out += format_coeff(mag);
    } else if (mag == 1.0) {
      out += mono;
    } else {
      out += format_coeff(mag) + "*" + mono;
    }
  }
  return out;
}

}  // namespace brs
