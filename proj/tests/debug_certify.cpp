#include <iostream>

#include "brs/certify.hpp"

using namespace brs;

int main() {
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

  const IqcSpec none = build_iqc_none();
  const ExtendedSystem E = extend(G, none);

  SynthesisConfig cfg;
  cfg.deg_V = 2;
  cfg.deg_k = 1;
  cfg.deg_s1 = 2;
  cfg.deg_s2 = 2;
  cfg.deg_s3 = 0;
  cfg.n_iter = 3;
  cfg.verbose = true;
  cfg.solver.verbose = false;

  std::cout << "V0 = " << to_string(init_V0(E, none, cfg)) << "\n";

  const Polynomial V = parse_polynomial("x^2", make_vars({"t", "x"}));
  const GammaStepResult res = gamma_step(E, none, cfg, V, {}, {});
  std::cout << "gamma_step ok=" << res.ok << " gamma=" << res.gamma
            << " probes=" << res.probes << "\n";
  if (res.ok) {
    std::cout << "k = " << to_string(res.snapshot.k_direct[0]) << "\n";
    std::cout << "s2 = " << to_string(res.snapshot.s2) << "\n";
    std::cout << "s3 = " << to_string(res.snapshot.s3) << "\n";
  }
  return 0;
}
