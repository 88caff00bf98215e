#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "reachmon/reachability.hpp"
#include "reachmon/stats.hpp"
#include "scalar_lmi_oracle.hpp"

using namespace reachmon;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

LmiData to_data(const oracle::ScalarLmi& s) {
  return LmiData(scalar(s.a), scalar(s.l), scalar(s.sigma), s.tau, s.w_bar, s.b);
}

struct ScalarSystem {
  LtiModel model;
  EstimatorConfig est;
  DetectorConfig det;
};

ScalarSystem scalar_system(double a, double l, double sigma, double tau) {
  ScalarSystem s{LtiModel(scalar(a), scalar(1.0), scalar(1.0), scalar(1.0), scalar(sigma), 1.0), {}, {}};
  s.est.L = scalar(l);
  s.est.sigma_r = scalar(sigma);
  s.est.steady_cov = scalar(0.0);
  s.det.tau = tau;
  return s;
}

double objective(const LmiResult& r) { return std::get<LmiSolution>(r).objective; }

}  // namespace

TEST(NoiseBound, Examples) {
  EXPECT_NEAR(noise_energy_bound(scalar(1.0), 0.99).value, 6.634896601021214, 1e-9);
  EXPECT_EQ(noise_energy_bound(MatrixXd::Zero(3, 3), 0.99).value, 0.0);
  const NoiseBound scaled = noise_energy_bound(2.0 * MatrixXd::Identity(4, 4), 0.95);
  EXPECT_NEAR(scaled.value, 2.0 * set_threshold(0.05, 4), 1e-9);
  EXPECT_FALSE(scaled.monte_carlo);
  EXPECT_THROW(noise_energy_bound(scalar(1.0), 1.0), DomainError);
}

TEST(NoiseBound, WeightedChiSquareMonteCarlo) {
  MatrixXd s = MatrixXd::Zero(2, 2);
  s(0, 0) = 1.0;
  s(1, 1) = 4.0;
  const NoiseBound nb = noise_energy_bound(s, 0.95, 11);
  EXPECT_TRUE(nb.monte_carlo);
  EXPECT_LT(nb.std_error / nb.value, 0.01);

  // Independent estimate from the test's own sampler.
  testgen::Gen g(2024);
  std::vector<double> draws(400000);
  for (double& d : draws) d = std::pow(g.normal(), 2) + 4.0 * std::pow(g.normal(), 2);
  std::nth_element(draws.begin(), draws.begin() + 380000, draws.end());
  EXPECT_NEAR(nb.value, draws[380000], 0.01 * nb.value);
}

TEST(Solver, MatchesBruteForceOnExample) {
  const oracle::ScalarLmi s{0.9, 0.5, 1.0, 3.84, 6.63, 0.85};
  const auto best = oracle::sweep_best_p(s);
  ASSERT_TRUE(best.has_value());
  const LmiResult r = solve_maxdet_lmi(to_data(s));
  ASSERT_TRUE(std::holds_alternative<LmiSolution>(r));
  const double ref = -std::log(*best);
  EXPECT_NEAR(objective(r), ref, 0.01 * std::abs(ref));
  EXPECT_GE(std::get<LmiSolution>(r).min_eig_ratio, -1e-8);
}

TEST(Solver, MatchesBruteForceOnFamilySample) {
  const auto family = oracle::scalar_family();
  for (std::size_t i = 0; i < family.size(); i += 5) {
    const auto& s = family[i];
    const auto best = oracle::sweep_best_p(s, 1e-6, 1e2, 20000);
    ASSERT_TRUE(best.has_value()) << i;
    const LmiResult r = solve_maxdet_lmi(to_data(s));
    ASSERT_TRUE(std::holds_alternative<LmiSolution>(r)) << i;
    const LmiSolution& sol = std::get<LmiSolution>(r);
    const double ref = -std::log(*best);
    EXPECT_NEAR(sol.objective, ref, 0.01 * std::abs(ref)) << i;
    EXPECT_GE(lmi_min_eig_ratio(to_data(s), sol.P), -1e-8) << i;
  }
}

TEST(Solver, StationaryPointIsSteinFixedPoint) {
  for (double a : {0.2, 0.7}) {
    const oracle::ScalarLmi s{a, 0.4, 1.5, 3.84, 2.0, 0.6};
    const double pi = (s.tau + s.w_bar) * (1.0 + s.l * s.l * s.sigma) / ((1.0 - s.b) * (1.0 - a * a / s.b));
    const LmiResult r = solve_maxdet_lmi(to_data(s));
    EXPECT_NEAR(objective(r), std::log(pi), 1e-6 * std::log(pi));
  }
}

TEST(Solver, LmiMatrixMatchesHandAssembly) {
  const oracle::ScalarLmi s{0.6, 0.3, 2.0, 3.84, 1.0, 0.5};
  EXPECT_TRUE(lmi_matrix(to_data(s), scalar(0.7)).isApprox(MatrixXd(oracle::scalar_q(s, 0.7)), 1e-14));
}

TEST(Solver, NonContractiveIsInfeasibleEverywhere) {
  for (int j = 1; j < 100; ++j) {
    const oracle::ScalarLmi s{1.0, 0.5, 1.0, 3.84, 6.63, 0.01 * j};
    EXPECT_TRUE(std::holds_alternative<InfeasibleMarker>(solve_maxdet_lmi(to_data(s)))) << s.b;
  }
}

TEST(Solver, MultiDimensionalSolutionSatisfiesLmi) {
  testgen::Gen g(8);
  for (int rep = 0; rep < 3; ++rep) {
    const int n = 3, m = 2;
    MatrixXd a = g.spd(n, 0.1, 0.6);
    MatrixXd l = MatrixXd::NullaryExpr(n, m, [&] { return 0.3 * g.normal(); });
    const LmiData data(a, l, g.spd(m, 0.5, 2.0), 5.99, 3.0, 0.7);
    const LmiResult r = solve_maxdet_lmi(data);
    ASSERT_TRUE(std::holds_alternative<LmiSolution>(r));
    const LmiSolution& sol = std::get<LmiSolution>(r);
    EXPECT_GE(lmi_min_eig_ratio(data, sol.P), -1e-8);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(sol.P).eigenvalues()(0), 0.0);
  }
}

TEST(Certificate, ScalarGridMatchesSweepOracle) {
  const ScalarSystem s = scalar_system(0.7, 0.5, 1.0, 3.84);
  CertificateOptions opts;
  opts.delta_h = 0.05;
  opts.w_bar = 6.63;
  const ReachCertificate cert = compute_certificate(s.model, s.est, s.det, opts);
  double best = std::numeric_limits<double>::infinity();
  double best_b = 0.0;
  for (int j = 1; j < 20; ++j) {
    const auto p = oracle::sweep_best_p({0.7, 0.5, 1.0, 3.84, 6.63, 0.05 * j}, 1e-6, 1e2, 20000);
    if (p && -std::log(*p) < best) {
      best = -std::log(*p);
      best_b = 0.05 * j;
    }
  }
  EXPECT_NEAR(cert.objective, best, 0.01 * std::abs(best));
  EXPECT_NEAR(cert.b_star, best_b, 1e-12);
  EXPECT_EQ(cert.grid.size(), 19u);
  EXPECT_NEAR(cert.Pi.matrix()(0, 0), std::exp(cert.objective), 1e-6 * std::exp(cert.objective));
  EXPECT_NO_THROW(verify_certificate(cert, s.model.A()));
}

TEST(Certificate, SinglePointGrid) {
  const ScalarSystem s = scalar_system(0.7, 0.5, 1.0, 3.84);
  CertificateOptions opts;
  opts.delta_h = 0.5;
  opts.w_bar = 6.63;
  const ReachCertificate cert = compute_certificate(s.model, s.est, s.det, opts);
  ASSERT_EQ(cert.grid.size(), 1u);
  EXPECT_DOUBLE_EQ(cert.b_star, 0.5);
  EXPECT_NEAR(cert.objective, objective(solve_maxdet_lmi(to_data({0.7, 0.5, 1.0, 3.84, 6.63, 0.5}))), 1e-9);
}

TEST(Certificate, AllInfeasibleListsGrid) {
  const ScalarSystem s = scalar_system(1.0, 0.5, 1.0, 3.84);
  CertificateOptions opts;
  opts.delta_h = 0.25;
  opts.w_bar = 1.0;
  try {
    compute_certificate(s.model, s.est, s.det, opts);
    FAIL() << "expected CertificateError";
  } catch (const CertificateError& e) {
    EXPECT_EQ(e.diagnostics().size(), 3u);
  }
  opts.delta_h = 1.0;
  EXPECT_THROW(compute_certificate(s.model, s.est, s.det, opts), DomainError);
}

TEST(Certificate, RefiningGridNeverHurts) {
  for (double a : {0.4, 0.8}) {
    const ScalarSystem s = scalar_system(a, 0.3, 1.0, 5.0);
    CertificateOptions coarse;
    coarse.delta_h = 0.1;
    coarse.w_bar = 2.0;
    CertificateOptions fine = coarse;
    fine.delta_h = 0.05;
    EXPECT_LE(compute_certificate(s.model, s.est, s.det, fine).objective,
              compute_certificate(s.model, s.est, s.det, coarse).objective + 1e-9);
  }
}

TEST(Certificate, WeakerDetectorNeverShrinksSet) {
  double prev = -std::numeric_limits<double>::infinity();
  for (double tau : {1.0, 2.0, 3.84, 6.63, 10.0, 20.0}) {
    const ScalarSystem s = scalar_system(0.6, 0.5, 1.0, tau);
    CertificateOptions opts;
    opts.delta_h = 0.1;
    opts.w_bar = 3.0;
    const double log_det = compute_certificate(s.model, s.est, s.det, opts).objective;  // = log det Pi
    EXPECT_GE(log_det, prev - 1e-9) << tau;
    prev = log_det;
  }
}

TEST(Certificate, VerifyRejectsCorruptedShape) {
  const ScalarSystem s = scalar_system(0.7, 0.5, 1.0, 3.84);
  CertificateOptions opts;
  opts.delta_h = 0.1;
  opts.w_bar = 6.63;
  ReachCertificate cert = compute_certificate(s.model, s.est, s.det, opts);
  ReachCertificate bad(ShapeMatrixd(cert.Pi.matrix() * 0.5));
  bad.b_star = cert.b_star;
  bad.tau = cert.tau;
  bad.w_bar = cert.w_bar;
  bad.L = cert.L;
  bad.sigma_r = cert.sigma_r;
  EXPECT_THROW(verify_certificate(bad, s.model.A()), CertificateError);
}

TEST(Certificate, InstantiateSharesShape) {
  const ScalarSystem s = scalar_system(0.7, 0.5, 1.0, 3.84);
  CertificateOptions opts;
  opts.delta_h = 0.1;
  opts.w_bar = 6.63;
  const ReachCertificate cert = compute_certificate(s.model, s.est, s.det, opts);
  const Ellipsoidd e0 = instantiate_reach_set(cert, VectorXd::Zero(1));
  const Ellipsoidd e1 = instantiate_reach_set(cert, VectorXd::Constant(1, 4.0));
  EXPECT_EQ(e0.center()(0), 0.0);
  EXPECT_EQ(e1.center()(0), 4.0);
  EXPECT_EQ(&e0.shape()(0, 0), &e1.shape()(0, 0));
  EXPECT_EQ(&e0.shape()(0, 0), &cert.Pi.matrix()(0, 0));
  EXPECT_THROW(instantiate_reach_set(cert, VectorXd::Zero(2)), DimensionError);
}
