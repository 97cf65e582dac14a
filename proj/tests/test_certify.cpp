#include <chrono>

#include "brs/certify.hpp"
#include "doctest.h"

using namespace brs;

namespace {

// x' = -x + d + u, X_T = {x^2 <= 1}, R = 0.1, T = 1, |u| <= 1, no perturbation.
NominalSystem scalar_analytic() {
  NominalSystem G;
  G.state_names = {"x"};
  G.control_names = {"u"};
  G.dist_names = {"d"};
  G.w_names = {};
  auto vars = make_vars({"x", "u", "d"});
  G.f = PolynomialMatrix(1, 1, vars);
  G.f.set(0, 0, parse_polynomial("0 - x + d", vars));
  G.g = PolynomialMatrix(1, 1, vars);
  G.g.set(0, 0, Polynomial(1.0, vars));
  G.h = PolynomialMatrix(0, 1, vars);
  G.P.resize(2, 1);
  G.P << 1.0, -1.0;
  G.b.resize(2);
  G.b << 1.0, 1.0;
  G.R = 0.1;
  G.target = parse_polynomial("x^2 - 1", make_vars({"x"}));
  G.horizon = 1.0;
  return G;
}

SynthesisConfig scalar_config() {
  SynthesisConfig cfg;
  cfg.deg_V = 2;
  cfg.deg_k = 1;
  cfg.deg_s1 = 2;
  cfg.deg_s2 = 2;
  cfg.deg_s3 = 0;
  cfg.n_iter = 3;
  cfg.bisect_rel_tol = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("gamma step against the fixed analytic storage function") {
  NominalSystem G = scalar_analytic();
  const IqcSpec none = build_iqc_none();
  const ExtendedSystem E = extend(G, none);
  const SynthesisConfig cfg = scalar_config();

  const Polynomial V = parse_polynomial("x^2", make_vars({"t", "x"}));
  SUBCASE("unit target binds at 0.99") {
    const GammaStepResult res = gamma_step(E, none, cfg, V);
    REQUIRE(res.ok);
    CHECK(res.gamma == doctest::Approx(0.99).epsilon(5e-3));
  }
  SUBCASE("target shrunk by four binds at 0.24") {
    NominalSystem G2 = scalar_analytic();
    G2.target = parse_polynomial("x^2 - 0.25", make_vars({"x"}));
    const ExtendedSystem E2 = extend(G2, none);
    const GammaStepResult res = gamma_step(E2, none, cfg, V);
    REQUIRE(res.ok);
    CHECK(res.gamma == doctest::Approx(0.24).epsilon(2e-2));
  }
}

TEST_CASE("v step keeps the previous iterate feasible and grows the level set") {
  NominalSystem G = scalar_analytic();
  const IqcSpec none = build_iqc_none();
  const ExtendedSystem E = extend(G, none);
  const SynthesisConfig cfg = scalar_config();

  const Polynomial V = parse_polynomial("x^2", make_vars({"t", "x"}));
  const GammaStepResult gs = gamma_step(E, none, cfg, V);
  REQUIRE(gs.ok);
  const VStepResult vs = v_step(E, none, cfg, gs.snapshot, gs.gamma);
  REQUIRE(vs.ok);
  CHECK(vs.margin >= 0.0);

  // Sampling audit of the level-set growth semantics: every point of
  // {V_prev(0,.) <= gamma} satisfies V_new(0,.) <= gamma + 1e-6.
  for (int i = 0; i <= 1000; ++i) {
    const double x = -1.5 + 3.0 * i / 1000.0;
    const double vprev = V.evaluate({{"t", 0.0}, {"x", x}});
    if (vprev <= gs.gamma) {
      const double vnew = vs.snapshot.V.evaluate({{"t", 0.0}, {"x", x}});
      CHECK(vnew <= gs.gamma + 1e-6);
    }
  }
}

TEST_CASE("scalar analytic pipeline certifies gamma >= 0.98 within 3 iterations") {
  const auto t0 = std::chrono::steady_clock::now();
  NominalSystem G = scalar_analytic();
  const IqcSpec none = build_iqc_none();
  const ExtendedSystem E = extend(G, none);
  const SynthesisConfig cfg = scalar_config();

  const Certificate cert = iterate(E, none, cfg);
  REQUIRE(!cert.history.empty());
  CHECK(cert.history.size() <= 3);
  CHECK(cert.gamma >= 0.98);

  // gamma history is nondecreasing.
  double prev = 0.0;
  for (const auto& rec : cert.history) {
    CHECK(rec.gamma >= prev - 1e-8);
    prev = rec.gamma;
  }

  const CertifyStatus status = reverify(E, none, cert);
  CHECK_MESSAGE(status.ok, status.message);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(wall < 60.0);
}
