#include <random>

#include "brs/sos.hpp"
#include "doctest.h"

using namespace brs;

TEST_CASE("gram basis sizes and ordering") {
  auto xy = make_vars({"x", "y"});
  auto b2 = gram_basis(xy, 2);
  REQUIRE(b2.size() == 3);
  CHECK(b2[0].is_constant());
  CHECK(gram_basis(xy, 4).size() == 6);
  auto x = make_vars({"x"});
  auto b0 = gram_basis(x, 0);
  REQUIRE(b0.size() == 1);
  CHECK(b0[0].is_constant());
  CHECK_THROWS_AS(gram_basis(xy, 3), std::invalid_argument);
}

TEST_CASE("perfect square compiles to the rank-one gram") {
  auto vars = make_vars({"x", "y"});
  SosProgram prog;
  prog.constraints.push_back(
      {"square", ParamPolynomial(parse_polynomial("x^2 + 2*x*y + y^2", vars)), vars, {}});
  CompiledSos compiled = compile(prog);
  const SdpSolution sol = solve(compiled.sdp);
  REQUIRE(sol.status == SdpStatus::Optimal);
  REQUIRE(compiled.grams[0].basis.size() == 2);  // [x, y] after pruning
  const Eigen::MatrixXd Q = compiled.gram(0, sol.y);
  CHECK(Q(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(Q(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(Q(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
  const Polynomial err =
      compiled.reconstruct(0, sol.y) - parse_polynomial("x^2 + 2*x*y + y^2", vars);
  CHECK(err.max_abs_coeff() <= 1e-6);
}

TEST_CASE("motzkin polynomial is rejected") {
  auto vars = make_vars({"x", "y"});
  const Polynomial motzkin = parse_polynomial("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", vars);
  SosProgram prog;
  prog.constraints.push_back({"motzkin", ParamPolynomial(motzkin), vars, {}});
  CompiledSos compiled = compile(prog);
  // Diagonal-consistency reduction should find the classical 4-element basis.
  CHECK(compiled.grams[0].basis.size() == 4);
  const SdpSolution sol = solve(compiled.sdp);
  CHECK(sol.status == SdpStatus::Infeasible);

  const SosCheckResult chk = check_sos(motzkin);
  CHECK_FALSE(chk.is_sos);
}

TEST_CASE("minimize c with c + x^2 in Sigma gives zero") {
  auto vars = make_vars({"x"});
  SosProgram prog;
  const Handle c = prog.alloc.fresh();
  ParamPolynomial expr =
      ParamPolynomial(parse_polynomial("x^2", vars)) +
      ParamPolynomial::scalar_handle(c, Polynomial(1.0, vars));
  prog.constraints.push_back({"shift", expr, vars, {}});
  prog.objective.emplace_back(c, -1.0);  // maximize -c = minimize c
  CompiledSos compiled = compile(prog);
  const SdpSolution sol = solve(compiled.sdp);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(compiled.handle_value(c, sol.y) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("check_sos certificates") {
  auto vars = make_vars({"x", "y"});
  SUBCASE("(x-y)^2 is sos with eigenvalues {0, 2}") {
    const SosCheckResult chk = check_sos(parse_polynomial("x^2 - 2*x*y + y^2", vars));
    REQUIRE(chk.is_sos);
    REQUIRE(chk.gram.rows() == 2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chk.gram, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(es.eigenvalues()[1] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(chk.coeff_residual <= 1e-6);
  }
  SUBCASE("-x^2 is not sos") {
    const SosCheckResult chk = check_sos(parse_polynomial("0 - x^2", vars));
    CHECK_FALSE(chk.is_sos);
  }
  SUBCASE("odd degree is not sos") {
    const SosCheckResult chk = check_sos(parse_polynomial("x^3 + 1", vars));
    CHECK_FALSE(chk.is_sos);
  }
}

TEST_CASE("sos decision polynomial solves a univariate bound") {
  // max c s.t. (x^2 - 2x + 2) - c >= 0 via s = x^2-2x+2-c in Sigma; optimum
  // is the true minimum 1 at x = 1.
  auto vars = make_vars({"x"});
  SosProgram prog;
  const Handle c = prog.alloc.fresh();
  ParamPolynomial expr = ParamPolynomial(parse_polynomial("x^2 - 2*x + 2", vars)) -
                         ParamPolynomial::scalar_handle(c, Polynomial(1.0, vars));
  prog.constraints.push_back({"bound", expr, vars, {}});
  prog.objective.emplace_back(c, 1.0);
  CompiledSos compiled = compile(prog);
  const SdpSolution sol = solve(compiled.sdp);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(compiled.handle_value(c, sol.y) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("adding a redundant sos-weighted constraint keeps feasibility") {
  auto vars = make_vars({"x", "y"});
  const char* bases[3] = {"x^2 + 1", "x^2 + 2*x*y + 2*y^2", "4 - 0*x"};
  for (const char* base : bases) {
    SosProgram prog;
    prog.constraints.push_back(
        {"base", ParamPolynomial(parse_polynomial(base, vars)), vars, {}});
    REQUIRE(solve(compile(prog).sdp).status == SdpStatus::Optimal);

    SosProgram prog2;
    ParamPolynomial s = prog2.new_sos_poly(vars, 2, "s");
    ParamPolynomial expr = ParamPolynomial(parse_polynomial(base, vars)) +
                           parse_polynomial("x^2 + y^2", vars) * s;
    prog2.constraints.push_back({"augmented", expr, vars, {}});
    CHECK(solve(compile(prog2).sdp).status == SdpStatus::Optimal);
  }
}

TEST_CASE("s-procedure certificate is pointwise sound") {
  // Certify g <= 0 on {h <= 0} with g = x^2 - 4, h = x^2 - 1 via
  // -g + h*s in Sigma, s in Sigma; then sample the region.
  auto vars = make_vars({"x"});
  const Polynomial g = parse_polynomial("x^2 - 4", vars);
  const Polynomial h = parse_polynomial("x^2 - 1", vars);
  SosProgram prog;
  ParamPolynomial s = prog.new_sos_poly(vars, 2, "s");
  prog.constraints.push_back({"sproc", ParamPolynomial(-g) + h * s, vars, {}});
  CompiledSos compiled = compile(prog);
  const SdpSolution sol = solve(compiled.sdp);
  REQUIRE(sol.status == SdpStatus::Optimal);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = unif(rng);
    REQUIRE(h.evaluate({{"x", x}}) <= 0.0);
    CHECK(g.evaluate({{"x", x}}) <= 1e-9);
  }
}

TEST_CASE("margin handle subtracts squared basis monomials") {
  // x^2 + 1 - delta*(x^2 + 1...) stays feasible with delta up to 1.
  auto vars = make_vars({"x"});
  SosProgram prog;
  const Handle delta = prog.alloc.fresh();
  prog.constraints.push_back(
      {"margin", ParamPolynomial(parse_polynomial("2*x^2 + 2", vars)), vars, delta});
  // delta >= 0 and delta <= 1.5 box.
  HandleLmi lo;
  lo.name = "delta_lo";
  lo.dim = 1;
  lo.add_coeff(delta, 0, 0, 1.0);
  prog.lmis.push_back(lo);
  HandleLmi hi;
  hi.name = "delta_hi";
  hi.dim = 1;
  hi.add_constant(0, 0, 1.5);
  hi.add_coeff(delta, 0, 0, -1.0);
  prog.lmis.push_back(hi);
  prog.objective.emplace_back(delta, 1.0);
  CompiledSos compiled = compile(prog);
  const SdpSolution sol = solve(compiled.sdp);
  REQUIRE(sol.status == SdpStatus::Optimal);
  // Gram basis is {1, x}; margin removes delta*(1 + x^2), feasible iff
  // delta <= 2.
  CHECK(compiled.handle_value(delta, sol.y) == doctest::Approx(1.5).epsilon(1e-5));
}

TEST_CASE("param polynomial calculus") {
  auto vars = make_vars({"t", "x"});
  HandleAllocator alloc;
  ParamPolynomial k = ParamPolynomial::free_poly(vars, 1, alloc);  // c0 + c1 t + c2 x
  CHECK(k.basis().size() == 3);
  ParamPolynomial dk = k.differentiate("x");
  CHECK(dk.basis().size() == 1);
  ParamPolynomial sub = k.substitute({{"t", Polynomial(0.0, vars)}});
  CHECK(sub.basis().size() == 2);  // the t-term vanished at t=0

  std::map<Handle, double> vals{{0, 1.0}, {1, 2.0}, {2, 3.0}};
  const Polynomial concrete = k.evaluate_handles(vals);
  CHECK(concrete.evaluate({{"t", 1.0}, {"x", 1.0}}) == doctest::Approx(6.0));
  CHECK_THROWS_AS(k.evaluate_handles({{0, 1.0}}), std::invalid_argument);
}
