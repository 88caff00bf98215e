// Acceptance gate: every primary criterion at its stated tolerance, one
// PASS/FAIL line each. Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ellipsoid_oracle.hpp"
#include "generators.hpp"
#include "reachmon/experiment.hpp"
#include "scalar_lmi_oracle.hpp"

using namespace reachmon;
namespace fs = std::filesystem;
using testgen::Gen;

namespace {

const std::string kSource = REACHMON_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Outcome ellipsoid_oracles() {
  Gen g(20240501);
  const int dims[] = {2, 3, 5};
  double worst_distance = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dims[trial % 3];
    const Ellipsoidd e(g.normal_vector(n), g.spd(n));
    const RowVectorXd c = g.normal_vector(n).transpose();
    const double b = c.dot(e.center()) + support_width(e.shape(), c) + g.uniform(0.1, 3.0);
    const HalfSpaced h(c, b);
    worst_distance =
        std::max(worst_distance, std::abs(distance_to_hyperplane(e, h) - oracle::sampled_boundary_distance(e, h, g, 20000)));
  }

  // Containment: the half-disk plus random caps, 1e5 points each.
  std::size_t violations = 0, instances = 0;
  bool shrink_loses = true;
  auto containment = [&](const Ellipsoidd& e, const HalfSpaced& h, bool check_shrink) {
    const auto cover = min_volume_intersection(e, h);
    if (!std::holds_alternative<Ellipsoidd>(cover)) {
      ++violations;
      return;
    }
    const Ellipsoidd& cap = std::get<Ellipsoidd>(cover);
    const MatrixXd root = sqrtm_psd(e.shape());
    std::vector<VectorXd> pts;
    while (pts.size() < 100000) {
      VectorXd x = e.center() + root * g.in_ball(e.dim());
      if (h.contains(x)) pts.push_back(std::move(x));
    }
    for (const VectorXd& x : pts) violations += oracle::inside(cap, x, 1e-9) ? 0 : 1;
    if (check_shrink) {
      for (Eigen::Index axis = 0; axis < e.dim(); ++axis) {
        MatrixXd shape = cap.shape();
        shape(axis, axis) *= 0.99 * 0.99;
        const Ellipsoidd shrunk(cap.center(), shape);
        std::size_t lost = 0;
        for (const VectorXd& x : pts) lost += oracle::inside(shrunk, x, 0.0) ? 0 : 1;
        shrink_loses = shrink_loses && lost > 0;
      }
    }
    ++instances;
  };
  RowVectorXd e1 = RowVectorXd::Zero(2);
  e1(0) = 1.0;
  containment(Ellipsoidd(VectorXd::Zero(2), MatrixXd::Identity(2, 2)), HalfSpaced(e1, 0.0), true);
  for (int i = 0; i < 8; ++i) {
    const int n = 2 + i % 4;
    const Ellipsoidd e(g.normal_vector(n), g.spd(n));
    const RowVectorXd c = g.direction(n);
    const double alpha = g.uniform(-0.9, 0.9);
    containment(e, HalfSpaced(c, c.dot(e.center()) - alpha * support_width(e.shape(), c)), false);
  }

  double worst_ratio = 0.0;
  for (int n = 2; n <= 10; ++n) {
    const double nd = n;
    const double expected = std::pow(nd * nd / (nd * nd - 1.0), nd) * (nd - 1.0) / (nd + 1.0);
    const Ellipsoidd e(g.normal_vector(n), g.spd(n, 0.5, 2.0));
    const RowVectorXd c = g.normal_vector(n).transpose();
    const auto cover = min_volume_intersection(e, HalfSpaced(c, c.dot(e.center())));
    const double ratio = std::exp(log_det_spd(std::get<Ellipsoidd>(cover).shape()) - log_det_spd(e.shape()));
    worst_ratio = std::max(worst_ratio, std::abs(ratio - expected));
  }

  Outcome o;
  o.pass = worst_distance <= 1e-3 && violations == 0 && shrink_loses && worst_ratio <= 1e-9;
  o.detail = fmt("max |distance - sampled| = %.2e (100 instances), containment violations = %zu over %zu x 1e5 points, "
                 "shrink check %s, max det-ratio error = %.2e",
                 worst_distance, violations, instances, shrink_loses ? "ok" : "failed", worst_ratio);
  return o;
}

Outcome solver_oracle() {
  const auto family = oracle::scalar_family();
  double worst_rel = 0.0, worst_eig = 1.0;
  std::size_t solved = 0;
  for (const auto& s : family) {
    const auto best = oracle::sweep_best_p(s);
    const LmiResult r = solve_maxdet_lmi(LmiData(MatrixXd::Constant(1, 1, s.a), MatrixXd::Constant(1, 1, s.l),
                                                 MatrixXd::Constant(1, 1, s.sigma), s.tau, s.w_bar, s.b));
    if (!best || !std::holds_alternative<LmiSolution>(r)) continue;
    ++solved;
    const LmiSolution& sol = std::get<LmiSolution>(r);
    const double ref = -std::log(*best);
    worst_rel = std::max(worst_rel, std::abs(sol.objective - ref) / std::abs(ref));
    const Eigen::Vector4d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(oracle::scalar_q(s, sol.P(0, 0))).eigenvalues();
    worst_eig = std::min(worst_eig, ev(0) / ev(3));
  }
  Outcome o;
  o.pass = family.size() >= 20 && solved == family.size() && worst_rel <= 0.01 && worst_eig >= -1e-8;
  o.detail = fmt("%zu/%zu tuples solved, max relative objective error = %.2e, min eig ratio = %.2e", solved,
                 family.size(), worst_rel, worst_eig);
  return o;
}

Outcome calibration_rates() {
  Outcome o{true, ""};
  for (const char* name : {"synth_roc.json", "tep_like.json"}) {
    const io::Scenario sc = io::load_scenario(kSource + "/scenarios/" + name);
    const LtiModel& m = sc.model.model;
    const EstimatorConfig est = calibrate_estimator(m);
    const DetectorConfig det = make_detector(0.05, static_cast<int>(m.m()));
    const long burn = 1000, steps = 100000;
    auto rate = [&](const AttackPlan& plan) {
      const SimTrace t = run_closed_loop(m, sc.controller, est, det, plan, burn + steps - 1, 4242);
      std::size_t alarms = 0;
      for (long k = burn; k < burn + steps; ++k) alarms += t.records[static_cast<std::size_t>(k)].alarm ? 1 : 0;
      return static_cast<double>(alarms) / static_cast<double>(steps);
    };
    const double nominal = rate(AttackPlan{});
    AttackPlan attack;
    attack.start = burn;
    attack.end = burn + steps;
    for (int i = 0; i < m.m(); ++i) attack.sensors.push_back(i);
    attack.strategy = AttackStrategy::GrowingBias;
    attack.rate = 0.05;
    const double bias = rate(attack);
    attack.strategy = AttackStrategy::ResidualSteering;
    const double steering = rate(attack);
    const bool ok = [](std::initializer_list<double> v) {
      for (double r : v) {
        if (r < 0.04 || r > 0.06) return false;
      }
      return true;
    }({nominal, bias, steering});
    o.pass = o.pass && ok;
    o.detail += fmt("%s%s: nominal %.4f, growing bias %.4f, residual steering %.4f", o.detail.empty() ? "" : "; ",
                    name, nominal, bias, steering);
  }
  return o;
}

Outcome containment() {
  const io::Scenario sc = io::load_scenario(kSource + "/scenarios/synth_roc.json");
  const Calibration cal = calibrate_scenario(sc, 7);
  const LtiModel& m = sc.model.model;
  const Eigen::LDLT<MatrixXd> pi(cal.cert->Pi.matrix());
  std::size_t inside = 0, total = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    TrialSpec spec = draw_trial(sc, 31337, i, 1 + static_cast<int>(i % 3));
    AttackPlan plan = sc.mix->stealthy;
    plan.sensors = spec.plan.sensors;
    plan.start = 100;
    plan.end = 599;
    if (i % 2 == 1) plan.strategy = AttackStrategy::ResidualSteering;
    const SimTrace t = run_closed_loop(m, sc.controller, cal.est, cal.det, plan, 599, spec.seed);
    for (const StepRecord& r : t.records) {
      if (!plan.active(r.k)) continue;
      const VectorXd e = r.x - r.x_hat;
      inside += e.dot(pi.solve(e)) <= 1.0 ? 1 : 0;
      ++total;
    }
  }
  const double frac = static_cast<double>(inside) / static_cast<double>(total);
  return {frac >= 0.94, fmt("error inside the p = %.2f set at %.4f of %zu attack steps over 500 runs (need >= 0.94)",
                            cal.cert->p, frac, total)};
}

Outcome roc_sweep() {
  const io::Scenario sc = io::load_scenario(kSource + "/scenarios/synth_roc.json");
  const std::uint64_t seed = sc.seed.value_or(1);
  const Calibration cal = calibrate_scenario(sc, seed);
  const std::vector<long> ks{50, 100, 200, 400, 800};
  const SweepResult res = run_validation_sweep(sc, cal, ks, 200, seed, 1);
  std::vector<std::uint64_t> pos, n;
  bool separated = res.rows.size() == ks.size();
  std::string rows;
  for (const RateRow& r : res.rows) {
    pos.push_back(r.tp);
    n.push_back(r.tp + r.fn);
    const auto t = r.tpr_ci();
    const auto f = r.fpr_ci();
    separated = separated && f.upper < t.lower;
    rows += fmt(" K=%ld TPR %.3f [%.3f, %.3f] FPR %.3f [%.3f, %.3f];", r.key, r.tpr(), t.lower, t.upper, r.fpr(),
                f.lower, f.upper);
  }
  const double p = stats::isotonic_residual_test(pos, n).p_value;
  return {p >= 0.05 && separated, fmt("isotonic p = %.3f, FPR upper < TPR lower at every K: %s;", p,
                                      separated ? "yes" : "no") + rows};
}

Outcome baseline_comparison() {
  const io::Scenario sc = io::load_scenario(kSource + "/scenarios/synth_baseline.json");
  const Calibration cal = calibrate_scenario(sc, sc.seed.value_or(1));
  int impact_first = 0, tu_up = 0, mon_better = 0, base_worse = 0;
  const int runs = 20;
  for (int i = 0; i < runs; ++i) {
    const ComparisonRun c = compare_with_baseline(sc, cal, derive_seed(sc.seed.value_or(1), static_cast<std::uint64_t>(i)));
    const bool valid = c.damage && c.damage_before_detection;
    impact_first += valid && c.first_impact && *c.first_impact < *c.damage ? 1 : 0;
    tu_up += valid && c.tu_slope >= 0.0 ? 1 : 0;
    mon_better += valid && c.monitor_error_late < c.monitor_error_early ? 1 : 0;
    base_worse += valid && c.baseline_error_late > c.baseline_error_early ? 1 : 0;
  }
  const double p_mon = stats::sign_test_p_value(static_cast<std::uint64_t>(mon_better), runs);
  const double p_base = stats::sign_test_p_value(static_cast<std::uint64_t>(base_worse), runs);
  return {impact_first >= 18 && tu_up >= 18 && p_mon < 0.05 && p_base < 0.05,
          fmt("impact > 0 before damage %d/20, t_u nondecreasing %d/20, monitor error shrinks %d/20 (p = %.2e), "
              "baseline error grows %d/20 (p = %.2e)",
              impact_first, tu_up, mon_better, p_mon, base_worse, p_base)};
}

Outcome performance() {
  const io::Scenario sc = io::load_scenario(kSource + "/scenarios/tep_like.json");
  const Calibration cal = calibrate_scenario(sc, sc.seed.value_or(1));
  BenchConfig cfg;
  for (long k = 100; k <= 1000; k += 100) cfg.k_list.push_back(k);
  cfg.constraint_counts = {5, 50, 100, 200, 300, 400, 500};
  cfg.checks = 1000;
  const std::vector<BenchRecord> recs = run_benchmark(sc.model.model, sc.controller, *cal.cert, cfg);
  std::vector<double> kx, ky, cx, cy;
  double at_1000 = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (i < cfg.k_list.size()) {
      kx.push_back(static_cast<double>(recs[i].K));
      ky.push_back(recs[i].mean_s);
      if (recs[i].K == 1000) at_1000 = recs[i].mean_s;
    } else {
      cx.push_back(static_cast<double>(recs[i].constraints));
      cy.push_back(recs[i].mean_s);
    }
  }
  const double r2k = stats::linear_fit(kx, ky).r_squared;
  const double r2c = stats::linear_fit(cx, cy).r_squared;
  return {r2k >= 0.95 && r2c >= 0.95 && at_1000 > 0.0 && at_1000 < 1.8,
          fmt("n = %ld, R^2 vs K = %.4f, R^2 vs constraints = %.4f, mean latency at K = 1000 with 5 constraints = "
              "%.3e s",
              static_cast<long>(sc.model.model.n()), r2k, r2c, at_1000)};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "reachmon_acceptance_determinism";
  fs::remove_all(dir);
  auto run = [&](const std::string& sub, unsigned jobs) {
    const std::string cmd = std::string(REACHMON_CLI_PATH) + " evaluate " + kSource +
                            "/scenarios/synth_roc.json --k-list 50,100,200,400,800 --trials 60 --seed 99 --jobs " +
                            std::to_string(jobs) + " --out-dir " + (dir / sub).string() + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const int a = run("a", 1), b = run("b", 1), c = run("c", 3);
  Outcome o;
  if (a != 0 || b != 0 || c != 0) {
    o.detail = "evaluate exited with an error";
    return o;
  }
  const std::string ra = io::read_file(dir / "a" / "rates.csv");
  const bool same = ra == io::read_file(dir / "b" / "rates.csv") && ra == io::read_file(dir / "c" / "rates.csv");
  o.pass = same && !ra.empty();
  o.detail = fmt("rates.csv (%zu bytes) identical across two serial runs and one with 3 jobs: %s", ra.size(),
                 same ? "yes" : "no");
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ellipsoid-oracles", ellipsoid_oracles},  {"solver-oracle", solver_oracle},
      {"calibration-rates", calibration_rates},  {"reach-set-containment", containment},
      {"roc-vs-K", roc_sweep},                   {"baseline-comparison", baseline_comparison},
      {"performance-scaling", performance},      {"determinism", determinism},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt("%.1f", secs) << " s): " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
