#include <iostream>
#include "brs/certify.hpp"

using namespace brs;

int main() {
  NominalSystem G;
  G.state_names = {"x1", "x2"};
  G.control_names = {"u"};
  G.dist_names = {"d"};
  G.w_names = {"w"};
  auto vars = make_vars({"x1", "x2", "u", "d", "w"});
  G.f = PolynomialMatrix(2, 1, vars);
  G.f.set(0, 0, parse_polynomial("-1.492*x1^3 + 4.239*x1^2 + 0.003*x1*x2 + 0.006*x2^2 "
                                 "- 3.236*x1 + 0.923*x2 + (0.240*x1 - 0.317)*w", vars));
  G.f.set(1, 0, parse_polynomial("-7.228*x1^3 + 1.103*x2^3 + 18.365*x1^2 - 45.339*x1 "
                                 "- 4.373*x2 + (41.505*x1 - 59.989)*w + 0.1*d", vars));
  G.g = PolynomialMatrix(2, 1, vars);
  G.g.set(0, 0, parse_polynomial("0.240*x1 - 0.317", vars));
  G.g.set(1, 0, parse_polynomial("41.505*x1 - 59.989", vars));
  G.h = PolynomialMatrix(1, 1, vars);
  G.h.set(0, 0, parse_polynomial("u", vars));
  G.P.resize(2, 1);
  G.P << 1.0, -1.0;
  G.b.resize(2);
  G.b << 0.261, 0.261;
  G.R = 0.03;
  G.target = parse_polynomial("x1^2 + x2^2 - 0.013538536094840649", make_vars({"x1", "x2"}));
  G.horizon = 1.0;
  const IqcSpec iqc = build_iqc_sector(0.0, 0.2, 2);
  const ExtendedSystem E = augment_actuator(G, iqc, {0});

  SynthesisConfig cfg;
  cfg.deg_V = 4;  cfg.deg_k = 3;
  cfg.deg_s1 = 2; cfg.deg_s2 = 2; cfg.deg_s3 = 2;
  cfg.solver.max_iterations = 200;

  const Polynomial V0 = init_V0(E, iqc, cfg);
  std::cout << diagnose_feasibility(E, iqc, cfg, V0, 1e-3) << "\n";
  return 0;
}
