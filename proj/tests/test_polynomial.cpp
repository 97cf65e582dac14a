#include <random>

#include "brs/polynomial.hpp"
#include "doctest.h"

using namespace brs;

namespace {

RationalPolynomial random_rational_poly(std::mt19937_64& rng, const VarSetPtr& vars,
                                        int max_degree) {
  std::uniform_int_distribution<int> nterms(1, 6);
  std::uniform_int_distribution<int> coeff(-9, 9);
  std::uniform_int_distribution<int> den(1, 5);
  RationalPolynomial p(vars);
  const int n = nterms(rng);
  for (int t = 0; t < n; ++t) {
    Monomial m{std::vector<int>(vars->size(), 0)};
    int budget = max_degree;
    for (int v = 0; v < vars->size(); ++v) {
      std::uniform_int_distribution<int> e(0, budget);
      m.exp[v] = e(rng);
      budget -= m.exp[v];
    }
    p.add_term(m, Rational(coeff(rng), den(rng)));
  }
  return p;
}

}  // namespace

TEST_CASE("addition basics") {
  auto vars = make_vars({"x", "y"});
  auto x = Polynomial::variable("x", vars);
  auto y = Polynomial::variable("y", vars);
  CHECK((x * x + Polynomial(1.0, vars)) + (-1.0 * (x * x)) == Polynomial(1.0, vars));
  auto p = 3.0 * x * y + y;
  CHECK(p + Polynomial(vars) == p);
  CHECK((x + y) + (x - y) == 2.0 * x);
}

TEST_CASE("multiplication basics") {
  auto vars = make_vars({"x", "y"});
  auto x = Polynomial::variable("x", vars);
  auto y = Polynomial::variable("y", vars);
  CHECK((x + y) * (x - y) == x * x - y * y);
  auto p = 2.5 * x * x * y - y;
  CHECK(p * Polynomial(1.0, vars) == p);
  auto sq = (x + Polynomial(1.0, vars)) * (x + Polynomial(1.0, vars));
  CHECK(sq == x * x + 2.0 * x + Polynomial(1.0, vars));
  CHECK(sq.degree() == 2);
}

TEST_CASE("degree sentinel on the zero polynomial") {
  auto vars = make_vars({"x"});
  Polynomial z(vars);
  CHECK(z.is_zero());
  CHECK(z.degree() == Polynomial::kDegNegInf);
  CHECK(z.degree_in(0) == 0);
}

TEST_CASE("differentiation") {
  auto vars = make_vars({"t", "x", "y"});
  auto x = Polynomial::variable("x", vars);
  auto y = Polynomial::variable("y", vars);
  CHECK((x * x).differentiate("x") == 2.0 * x);
  CHECK((x * x).differentiate("t").is_zero());
  CHECK((x * x * x * y).differentiate("x") == 3.0 * x * x * y);
}

TEST_CASE("substitution") {
  auto vars = make_vars({"t", "x"});
  auto t = Polynomial::variable("t", vars);
  auto x = Polynomial::variable("x", vars);
  CHECK((t * x).substitute({{"t", Polynomial(2.0, vars)}}) == 2.0 * x);

  auto yv = make_vars({"y"});
  auto y = Polynomial::variable("y", yv);
  auto sub = (x * x).substitute({{"x", y + Polynomial(1.0, yv)}});
  auto expect = y * y + 2.0 * y + Polynomial(1.0, yv);
  CHECK(sub == expect.with_vars(sub.vars()));
}

TEST_CASE("evaluate with compensated accumulation") {
  auto vars = make_vars({"x", "y"});
  auto x = Polynomial::variable("x", vars);
  auto y = Polynomial::variable("y", vars);
  CHECK((x * x + y * y).evaluate({{"x", 1.0}, {"y", 1.0}}) == doctest::Approx(2.0));
  CHECK((x - y).evaluate({{"x", 3.0}, {"y", 3.0}}) == doctest::Approx(0.0));
  CHECK_THROWS_AS((x * y).evaluate({{"x", 1.0}}), std::invalid_argument);
}

TEST_CASE("gtm longitudinal model spot values") {
  auto vars = make_vars({"x1", "x2", "u"});
  auto f1 = parse_polynomial(
      "-1.492*x1^3 + 4.239*x1^2 + 0.003*x1*x2 + 0.006*x2^2 - 3.236*x1 + 0.923*x2 + "
      "(0.240*x1 - 0.317)*u",
      vars);
  auto f2 = parse_polynomial(
      "-7.228*x1^3 + 1.103*x2^3 + 18.365*x1^2 - 45.339*x1 - 4.373*x2 + "
      "(41.505*x1 - 59.989)*u",
      vars);
  // The model has no constant term, so the origin with u = 0 is an equilibrium.
  CHECK(f1.evaluate({{"x1", 0.0}, {"x2", 0.0}, {"u", 0.0}}) == 0.0);
  CHECK(f2.evaluate({{"x1", 0.0}, {"x2", 0.0}, {"u", 0.0}}) == 0.0);
  CHECK(f2.evaluate({{"x1", 0.0}, {"x2", 0.0}, {"u", 1.0}}) == doctest::Approx(-59.989));
}

TEST_CASE("parser errors carry line and column") {
  auto vars = make_vars({"x"});
  CHECK_THROWS_WITH_AS(parse_polynomial("x + z", vars),
                       doctest::Contains("line 1, column 5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_polynomial("x ^", vars), std::invalid_argument);
  CHECK_THROWS_AS(parse_polynomial("x 3", vars), std::invalid_argument);
}

TEST_CASE("print/parse round trip is exact") {
  std::mt19937_64 rng(7);
  auto vars = make_vars({"t", "x1", "x2", "w"});
  std::uniform_real_distribution<double> coeff(-10.0, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    Polynomial p(vars);
    std::uniform_int_distribution<int> nterms(0, 8);
    const int n = nterms(rng);
    for (int tidx = 0; tidx < n; ++tidx) {
      Monomial m{std::vector<int>(4, 0)};
      for (int v = 0; v < 4; ++v) m.exp[v] = std::uniform_int_distribution<int>(0, 3)(rng);
      p.add_term(m, coeff(rng));
    }
    const std::string text = to_string(p);
    CHECK(parse_polynomial(text, vars) == p);
    CHECK(to_string(parse_polynomial(text, vars)) == text);
  }
}

TEST_CASE("ring axioms hold exactly over rationals") {
  std::mt19937_64 rng(11);
  auto vars = make_vars({"a", "b", "c", "d"});
  for (int rep = 0; rep < 40; ++rep) {
    auto p = random_rational_poly(rng, vars, 4);
    auto q = random_rational_poly(rng, vars, 4);
    auto r = random_rational_poly(rng, vars, 4);
    CHECK(p * (q + r) == p * q + p * r);
    CHECK(p * q == q * p);
    CHECK((p + q) + r == p + (q + r));
  }
}

TEST_CASE("product rule is exact over rationals") {
  std::mt19937_64 rng(13);
  auto vars = make_vars({"a", "b", "c"});
  for (int rep = 0; rep < 40; ++rep) {
    auto p = random_rational_poly(rng, vars, 4);
    auto q = random_rational_poly(rng, vars, 4);
    auto lhs = (p * q).differentiate("a");
    auto rhs = p * q.differentiate("a") + q * p.differentiate("a");
    CHECK(lhs == rhs);
  }
}

TEST_CASE("evaluate/substitute consistency") {
  std::mt19937_64 rng(17);
  auto vars = make_vars({"x", "y"});
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  for (int rep = 0; rep < 30; ++rep) {
    Polynomial p(vars), q(vars);
    for (int tidx = 0; tidx < 5; ++tidx) {
      Monomial m{std::vector<int>(2, 0)};
      m.exp[0] = std::uniform_int_distribution<int>(0, 3)(rng);
      m.exp[1] = std::uniform_int_distribution<int>(0, 3)(rng);
      p.add_term(m, val(rng));
      Monomial mq{std::vector<int>(2, 0)};
      mq.exp[1] = std::uniform_int_distribution<int>(0, 2)(rng);
      q.add_term(mq, val(rng));
    }
    const double xv = val(rng), yv = val(rng);
    const double direct = p.evaluate({{"x", q.evaluate({{"x", 0.0}, {"y", yv}})}, {"y", yv}});
    const double composed = p.substitute({{"x", q}}).evaluate({{"x", xv}, {"y", yv}});
    CHECK(composed == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("polynomial matrix shares one variable set") {
  auto vars = make_vars({"x", "w"});
  PolynomialMatrix g(2, 1, vars);
  g.set(0, 0, parse_polynomial("0.240*x - 0.317", make_vars({"x"})));
  g.set(1, 0, Polynomial(1.0, vars));
  CHECK(g.at(0, 0).vars() == vars);
  CHECK(g.at(0, 0).evaluate({{"x", 0.0}, {"w", 0.0}}) == doctest::Approx(-0.317));
}
