#include <chrono>
#include <iostream>

#include "brs/certify.hpp"
#include "brs/validate.hpp"

using namespace brs;

namespace {

NominalSystem make_gtm(double R, double T) {
  NominalSystem G;
  G.state_names = {"x1", "x2"};
  G.control_names = {"u"};
  G.dist_names = {"d"};
  G.w_names = {"w"};
  auto vars = make_vars({"x1", "x2", "u", "d", "w"});
  G.f = PolynomialMatrix(2, 1, vars);
  G.f.set(0, 0, parse_polynomial("-1.492*x1^3 + 4.239*x1^2 + 0.003*x1*x2 + 0.006*x2^2 "
                                 "- 3.236*x1 + 0.923*x2 + (0.240*x1 - 0.317)*w",
                                 vars));
  G.f.set(1, 0, parse_polynomial("-7.228*x1^3 + 1.103*x2^3 + 18.365*x1^2 - 45.339*x1 "
                                 "- 4.373*x2 + (41.505*x1 - 59.989)*w + 0.1*d",
                                 vars));
  G.g = PolynomialMatrix(2, 1, vars);
  G.g.set(0, 0, parse_polynomial("0.240*x1 - 0.317", vars));
  G.g.set(1, 0, parse_polynomial("41.505*x1 - 59.989", vars));
  G.h = PolynomialMatrix(1, 1, vars);
  G.h.set(0, 0, parse_polynomial("u", vars));
  G.P.resize(2, 1);
  G.P << 1.0, -1.0;
  G.b.resize(2);
  G.b << 0.261, 0.261;
  G.R = R;
  G.target = parse_polynomial("x1^2 + x2^2 - 0.013538536094840649", make_vars({"x1", "x2"}));
  G.horizon = T;
  return G;
}

}  // namespace

int main(int argc, char** argv) {
  const double T = argc > 1 ? std::atof(argv[1]) : 1.0;
  const int n_iter = argc > 2 ? std::atoi(argv[2]) : 2;
  NominalSystem G = make_gtm(0.03, T);
  const IqcSpec iqc = build_iqc_sector(0.0, 0.2, 2);
  const ExtendedSystem E = augment_actuator(G, iqc, {0});

  SynthesisConfig cfg;
  cfg.deg_V = 4;
  cfg.deg_k = 3;
  cfg.deg_s1 = 2;
  cfg.deg_s2 = 2;
  cfg.deg_s3 = 2;
  cfg.deg_s4 = 2;
  cfg.deg_s5 = 2;
  cfg.deg_s6 = 2;
  cfg.deg_lambda = 2;
  cfg.n_iter = n_iter;
  cfg.bisect_rel_tol = 5e-3;
  cfg.verbose = true;


  const auto t0 = std::chrono::steady_clock::now();
  const Certificate cert = iterate(E, iqc, cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "gamma = " << cert.gamma << " wall = " << wall << " s\n";
  for (const auto& rec : cert.history)
    std::cout << "  iter " << rec.index << ": gamma=" << rec.gamma
              << " probes=" << rec.gamma_probes << " vstep=" << rec.v_step_ok
              << " wall=" << rec.wall_sec << "\n";

  const auto rv0 = std::chrono::steady_clock::now();
  const CertifyStatus st = reverify(E, iqc, cert);
  std::cout << "reverify: " << (st.ok ? "ok" : "FAIL") << " (" << st.message << ") in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - rv0).count()
            << " s\n";

  // Quick simulation sanity at a few certified points.
  const std::vector<std::pair<double, double>> box{{-0.6, 0.6}, {-0.6, 0.6}};
  const auto pts = sample_level_set(cert, box, 20000, 42);
  std::cout << "certified sample count (20k draws): " << pts.size() << "\n";
  int fails = 0;
  for (size_t i = 0; i < std::min<size_t>(pts.size(), 20); ++i) {
    const PerturbationSample pert =
        draw_perturbation(MKind::Sector, iqc.mset, derive_seed(7, "p", i));
    const DisturbanceSignal dist = make_disturbance(1, 0.03, T, derive_seed(7, "d", i));
    const Trajectory traj = simulate(E, cert, pts[i], pert, dist, 1e-3);
    const double slack = traj.terminal_target_slack(cert.target, cert.xg_names);
    if (traj.diverged || slack > 1e-6) {
      ++fails;
      std::cout << "  FAIL at sample " << i << " slack=" << slack << "\n";
    }
  }
  std::cout << "simulation failures: " << fails << "/20\n";
  return 0;
}
