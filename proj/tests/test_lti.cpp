#include <cmath>
#include <random>

#include "brs/lti.hpp"
#include "doctest.h"

using namespace brs;

namespace {

// RK4 propagation of the filter driven by sampled v(t), w(t).
struct FilterSim {
  const LinearSystem& sys;
  Eigen::VectorXd x;
  explicit FilterSim(const LinearSystem& s) : sys(s), x(Eigen::VectorXd::Zero(s.n_psi())) {}
  Eigen::VectorXd deriv(const Eigen::VectorXd& xs, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& w) const {
    return sys.A * xs + sys.B1 * v + sys.B2 * w;
  }
  Eigen::VectorXd z(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const {
    return sys.C * x + sys.D1 * v + sys.D2 * w;
  }
  void step(double dt, const Eigen::VectorXd& v0, const Eigen::VectorXd& w0,
            const Eigen::VectorXd& v1, const Eigen::VectorXd& w1) {
    const Eigen::VectorXd vm = 0.5 * (v0 + v1), wm = 0.5 * (w0 + w1);
    const Eigen::VectorXd k1 = deriv(x, v0, w0);
    const Eigen::VectorXd k2 = deriv(x + 0.5 * dt * k1, vm, wm);
    const Eigen::VectorXd k3 = deriv(x + 0.5 * dt * k2, vm, wm);
    const Eigen::VectorXd k4 = deriv(x + dt * k3, v1, w1);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
};

}  // namespace

TEST_CASE("psi column realization matches its transfer function") {
  const LinearSystem sys = make_psi_column(1, 10.0);
  CHECK(sys.A(0, 0) == -10.0);
  CHECK(sys.B1(0, 0) == 1.0);
  CHECK(sys.C(1, 0) == 1.0);
  CHECK(sys.D1(0, 0) == 1.0);
  for (double omega : {0.0, 1.0, 10.0}) {
    const Eigen::MatrixXcd resp = freq_response(sys, omega);
    const std::complex<double> s(0.0, omega);
    CHECK(std::abs(resp(0, 0) - 1.0) <= 1e-12);
    CHECK(std::abs(resp(1, 0) - 1.0 / (s + 10.0)) <= 1e-12);
  }
}

TEST_CASE("psi column degenerate and higher-order cases") {
  const LinearSystem stat = make_psi_column(0, 5.0);
  CHECK(stat.n_psi() == 0);
  CHECK(freq_response(stat, 3.0)(0, 0).real() == doctest::Approx(1.0));

  const LinearSystem two = make_psi_column(2, 1.0);
  const Eigen::MatrixXcd dc = freq_response(two, 0.0);
  CHECK(std::abs(dc(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(dc(1, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(dc(2, 0) - 1.0) <= 1e-12);

  CHECK_THROWS_AS(make_psi_column(1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_psi_column(1, -2.0), std::invalid_argument);
}

TEST_CASE("iqc library structures") {
  const IqcSpec sector = build_iqc_sector(0.0, 0.2);
  CHECK(sector.filter.n_psi() == 0);
  CHECK(sector.filter.n_z() == 2);
  const Eigen::Matrix2d S = sector.mset.sector_base();
  CHECK(S(0, 0) == doctest::Approx(0.0));
  CHECK(S(0, 1) == doctest::Approx(0.2));
  CHECK(S(1, 1) == doctest::Approx(-2.0));

  const IqcSpec nl = build_iqc_nlgain(0.2);
  // lambda = 1 gives M = diag(sigma^2, -1).
  CHECK(nl.mset.sigma * nl.mset.sigma == doctest::Approx(0.04));
  CHECK(nl.filter.n_psi() == 0);

  const IqcSpec dg = build_iqc_dg(0.2, 1, 10.0);
  CHECK(dg.filter.n_psi() == 2);
  CHECK(dg.filter.n_z() == 4);
  CHECK(dg.hardness == Hardness::Soft);
  CHECK(dg.mset.m11_dim == 2);

  CHECK_THROWS_AS(build_iqc_sector(0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(build_iqc_nlgain(0.0), std::invalid_argument);
}

TEST_CASE("kyp matrix formula") {
  SUBCASE("no filter states reduces to D' M D") {
    LinearSystem sys;
    sys.A.resize(0, 0);
    sys.B1.resize(0, 1);
    sys.B2.resize(0, 1);
    sys.C.resize(2, 0);
    sys.D1 = Eigen::MatrixXd::Zero(2, 1);
    sys.D1(0, 0) = 1.0;
    sys.D2 = Eigen::MatrixXd::Zero(2, 1);
    sys.D2(1, 0) = 1.0;
    Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
    M(1, 1) = -1.0;
    const Eigen::MatrixXd K =
        kyp_matrix(Eigen::MatrixXd::Zero(0, 0), sys, M);
    REQUIRE(K.rows() == 1);
    CHECK(K(0, 0) == doctest::Approx(-1.0));
  }
  SUBCASE("zero data gives zero") {
    const Eigen::MatrixXd Z1 = Eigen::MatrixXd::Zero(1, 1);
    CHECK(kyp_matrix(Z1, Z1, Z1, Z1, Z1, Z1).norm() == 0.0);
  }
  SUBCASE("scalar hand expansion") {
    Eigen::MatrixXd A(1, 1), B(1, 1), C(1, 1), D(1, 1), M(1, 1), Y(1, 1);
    A << -1.0;
    B << 1.0;
    C << 1.0;
    D << 0.0;
    M << 1.0;
    Y << 1.0;
    const Eigen::MatrixXd K = kyp_matrix(Y, A, B, C, D, M);
    CHECK(K(0, 0) == doctest::Approx(-1.0));
    CHECK(K(0, 1) == doctest::Approx(1.0));
    CHECK(K(1, 1) == doctest::Approx(0.0));
  }
}

TEST_CASE("kyp_find_y22 on the dg factorization") {
  IqcSpec dg = build_iqc_dg(0.2, 1, 10.0);
  const int nz = dg.filter.n_z();
  REQUIRE(nz == 4);

  SUBCASE("M_D special case admits a Y22") {
    // M = [[sigma^2 I, 0], [0, -I]]: Pi22 = -psi11~ psi11 < 0.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nz, nz);
    M.topLeftCorner(2, 2) = 0.04 * Eigen::Matrix2d::Identity();
    M.bottomRightCorner(2, 2) = -Eigen::Matrix2d::Identity();
    for (double w : {1e-3, 1e-1, 1.0, 1e2}) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(pi22_at(dg.filter, M, w),
                                                         Eigen::EigenvaluesOnly);
      CHECK(es.eigenvalues().maxCoeff() < 0.0);
    }
    const auto Y22 = kyp_find_y22(dg, M);
    REQUIRE(Y22.has_value());
    const Eigen::MatrixXd K = kyp_matrix(*Y22, dg.filter, M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().maxCoeff() <= -1e-9);
  }
  SUBCASE("M = 0 has no strict solution") {
    CHECK_FALSE(kyp_find_y22(dg, Eigen::MatrixXd::Zero(nz, nz)).has_value());
  }
  SUBCASE("empty filter reduces to the D2'MD2 sign test") {
    IqcSpec nl = build_iqc_nlgain(0.2);
    nl.hardness = Hardness::Soft;  // exercise the degenerate path
    Eigen::Matrix2d M;
    M << 0.04, 0.0, 0.0, -1.0;
    const auto Y22 = kyp_find_y22(nl, M);
    REQUIRE(Y22.has_value());
    CHECK(Y22->rows() == 0);
  }
}

TEST_CASE("freq response limits") {
  const LinearSystem one_pole = make_psi_column(1, 10.0);
  CHECK(std::abs(freq_response(one_pole, 0.0)(1, 0)) == doctest::Approx(0.1));
  CHECK(std::abs(freq_response(one_pole, 1e6)(1, 0)) <= 1e-5);
}

TEST_CASE("hard sector iqc holds along simulated signals") {
  // Delta(v) = 0.2 v sin^2(v) lies in the sector [0, 0.2]; with lambda = 1 the
  // integrand z' M z = 2 (w - alpha v)(beta v - w) is pointwise nonnegative.
  const IqcSpec spec = build_iqc_sector(0.0, 0.2);
  const Eigen::Matrix2d M = spec.mset.sector_base();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> amp(-2.0, 2.0);
  for (int run = 0; run < 100; ++run) {
    const double a1 = amp(rng), a2 = amp(rng), f1 = 1.0 + std::abs(amp(rng)),
                 f2 = 2.0 + std::abs(amp(rng));
    double integral = 0.0, prev = 0.0;
    const double dt = 1e-3;
    for (int i = 0; i <= 2000; ++i) {
      const double t = i * dt;
      const double v = a1 * std::sin(f1 * t) + a2 * std::cos(f2 * t);
      const double w = 0.2 * v * std::sin(v) * std::sin(v);
      Eigen::Vector2d z(v, w);
      const double qv = z.dot(M * z);
      if (i > 0) integral += 0.5 * dt * (prev + qv);
      prev = qv;
      REQUIRE(integral >= -1e-8);
    }
  }
}

TEST_CASE("soft iqc finite-horizon lower bound along trajectories") {
  IqcSpec dg = build_iqc_dg(0.2, 1, 10.0);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(4, 4);
  M.topLeftCorner(2, 2) = 0.04 * Eigen::Matrix2d::Identity();
  M.bottomRightCorner(2, 2) = -Eigen::Matrix2d::Identity();
  const auto Y22 = kyp_find_y22(dg, M);
  REQUIRE(Y22.has_value());

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> delta_dist(-0.2, 0.2);
  std::uniform_real_distribution<double> amp(-1.5, 1.5);
  const double dt = 5e-4;
  for (int run = 0; run < 100; ++run) {
    const double delta = delta_dist(rng);
    const double a1 = amp(rng), f1 = 0.5 + std::abs(amp(rng)), a2 = amp(rng),
                 f2 = 3.0 + std::abs(amp(rng));
    FilterSim sim(dg.filter);
    auto vw = [&](double t) {
      const double v = a1 * std::sin(f1 * t) + a2 * std::sin(f2 * t + 0.3);
      return std::make_pair(Eigen::VectorXd::Constant(1, v),
                            Eigen::VectorXd::Constant(1, delta * v));
    };
    double integral = 0.0;
    auto [v0, w0] = vw(0.0);
    double prev = sim.z(v0, w0).dot(M * sim.z(v0, w0));
    for (int i = 1; i <= 4000; ++i) {
      auto [va, wa] = vw((i - 1) * dt);
      auto [vb, wb] = vw(i * dt);
      sim.step(dt, va, wa, vb, wb);
      const Eigen::VectorXd z = sim.z(vb, wb);
      const double qv = z.dot(M * z);
      integral += 0.5 * dt * (prev + qv);
      prev = qv;
      const double bound = -sim.x.dot(*Y22 * sim.x);
      REQUIRE(integral >= bound - 1e-6);
    }
  }
}
